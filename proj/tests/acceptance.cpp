// Acceptance suite: one pass/fail line per criterion, with the measured
// numbers printed underneath.  Exit code is the number of failed criteria.

#include "cavspec/lab.hpp"
#include "cavspec/spectra.hpp"

#include "support/dense_oracle.hpp"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <random>
#include <vector>

using namespace cavspec;
using namespace cavspec::spectra;
using material::MatrixField;
using material::PermittivityField;
using material::PerturbationDirection;
using material::Sym3;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kPi = 3.14159265358979323846;
const PermittivityField kIdentity{MatrixField::identity()};

int g_failures = 0;

void report(int criterion, bool pass, const std::string& title) {
    std::printf("[%s] C%-2d %s\n", pass ? "PASS" : "FAIL", criterion, title.c_str());
    if (!pass) ++g_failures;
    std::fflush(stdout);
}

void detail(const char* fmt, ...) {
    std::va_list args;
    va_start(args, fmt);
    std::printf("       ");
    std::vprintf(fmt, args);
    std::printf("\n");
    va_end(args);
    std::fflush(stdout);
}

double wall_seconds(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> gradient_values(const Spectrum& s) {
    std::vector<double> g;
    for (const auto& e : s.entries)
        if (e.label == Family::Gradient) g.push_back(e.sigma);
    return g;
}

// composite diagonal bump direction with distinct per-axis radii; splits the
// axis-polarized cube cluster at first order
PerturbationDirection diagonal_bump_direction(const geometry::Mesh& mesh,
                                              const geometry::QuadratureRule& rule) {
    const auto L = mesh.box().extent;
    const material::SamplingSpec sampling{&mesh, &rule, 2};
    std::array<expr::ScalarExpr, 3> bumps;
    const std::array<double, 3> radii{0.40, 0.32, 0.25};
    for (int h = 0; h < 3; ++h) {
        expr::ScalarExpr b = expr::ScalarExpr::bump1d(0, 0.5 * L[0], radii[h] * L[0]);
        for (int d = 1; d < 3; ++d)
            b = b * expr::ScalarExpr::bump1d(d, 0.5 * L[d], radii[h] * L[d]);
        bumps[h] = b;
    }
    return material::make_diagonal_direction(bumps, sampling);
}

// ------------------------------------------------------------------ C1 ----

void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto mesh = geometry::build_box_mesh({kPi, kPi, kPi}, {10, 10, 10});
    const auto rule = geometry::gauss_rule(5);
    SpectrumTols tols;
    tols.r_max = calibrate_r_max(mesh, rule, tols.solver_tol);
    const Spectrum s = maxwell_spectrum(mesh, rule, kIdentity, 1.0, 12, tols);
    const double secs = wall_seconds(t0);

    const auto mw = s.maxwell_indices();
    const auto grad = gradient_values(s);
    bool pass = mw.size() >= 5 && !grad.empty() && secs <= 120.0;
    for (int i = 0; i < 3 && pass; ++i)
        pass = std::abs(s.sigma(mw[i]) - 2.0) <= 0.02 * 2.0;
    for (int i = 3; i < 5 && pass; ++i)
        pass = std::abs(s.sigma(mw[i]) - 3.0) <= 0.02 * 3.0;
    if (pass) pass = std::abs(grad.front() - 3.0) <= 0.02 * 3.0;

    report(1, pass, "cube validation: Maxwell 2,2,2 / 3,3 and gradient 3 within 2%");
    if (mw.size() >= 5)
        detail("maxwell: %.6f %.6f %.6f %.6f %.6f", s.sigma(mw[0]), s.sigma(mw[1]), s.sigma(mw[2]),
               s.sigma(mw[3]), s.sigma(mw[4]));
    if (!grad.empty()) detail("lowest gradient: %.6f", grad.front());
    detail("runtime %.1fs (limit 120s), calibrated r_max %.3f", secs, tols.r_max);
}

// ------------------------------------------------------------------ C2 ----

void criterion_2() {
    const auto mesh = geometry::build_box_mesh({kPi, kPi, kPi}, {10, 10, 10});
    const auto rule = geometry::gauss_rule(5);
    const std::vector<double> taus{0.5, 1.0, 2.0};
    std::vector<std::vector<double>> maxwell(taus.size()), grads(taus.size());
    for (std::size_t i = 0; i < taus.size(); ++i) {
        const Spectrum s = maxwell_spectrum(mesh, rule, kIdentity, taus[i], 12);
        maxwell[i] = maxwell_eigenvalues(s);
        grads[i] = gradient_values(s);
    }
    bool pass = true;
    double worst_maxwell = 0.0;
    for (std::size_t a = 0; a < taus.size(); ++a)
        for (std::size_t b = a + 1; b < taus.size(); ++b)
            for (int j = 0; j < 5; ++j) {
                if (maxwell[a].size() < 5 || maxwell[b].size() < 5) {
                    pass = false;
                    break;
                }
                const double rel = std::abs(maxwell[a][j] - maxwell[b][j]) / maxwell[a][j];
                worst_maxwell = std::max(worst_maxwell, rel);
                if (rel > 0.005) pass = false;
            }
    double worst_grad = 0.0;
    for (std::size_t a = 0; a < taus.size(); ++a)
        for (std::size_t b = a + 1; b < taus.size(); ++b) {
            const std::size_t m = std::min(grads[a].size(), grads[b].size());
            if (m == 0) pass = false;
            for (std::size_t j = 0; j < m; ++j) {
                const double rel =
                    std::abs(grads[a][j] * taus[b] / (grads[b][j] * taus[a]) - 1.0);
                worst_grad = std::max(worst_grad, rel);
                if (rel > 0.01) pass = false;
            }
        }
    report(2, pass, "tau independence: Maxwell within 0.5%, gradients linear in tau within 1%");
    detail("worst Maxwell pairwise deviation %.3e (limit 5e-3)", worst_maxwell);
    detail("worst gradient linearity deviation %.3e (limit 1e-2)", worst_grad);
}

// ------------------------------------------------------------------ C3 ----

void criterion_3() {
    const auto rule = geometry::gauss_rule(5);
    // (a) exact pencil identity on the cube
    const auto cube = geometry::build_box_mesh({kPi, kPi, kPi}, {10, 10, 10});
    const PermittivityField two{MatrixField::constant(Sym3::diagonal(2, 2, 2))};
    const Spectrum sa = compute_spectrum(cube, rule, two, 0.25, 12);
    const Spectrum sb = compute_spectrum(cube, rule, kIdentity, 1.0, 12);
    double worst_identity = 0.0;
    for (int i = 0; i < 12; ++i)
        worst_identity = std::max(worst_identity, std::abs(sa.sigma(i) - 0.5 * sb.sigma(i)));

    // (b) alpha-scaling of the Maxwell values on a box whose five lowest
    // Maxwell eigenvalues are simple divergence-free modes
    const auto box = geometry::build_box_mesh({kPi, 1.1 * kPi, 2.6 * kPi}, {8, 9, 21});
    const Spectrum s1 = maxwell_spectrum(box, rule, kIdentity, 1.0, 9);
    const Spectrum s2 = maxwell_spectrum(box, rule, two, 1.0, 9);
    const auto m1 = maxwell_eigenvalues(s1);
    const auto m2 = maxwell_eigenvalues(s2);
    double worst_scaling = 0.0;
    bool pass = worst_identity <= 1e-10 && m1.size() >= 5 && m2.size() >= 5;
    for (int j = 0; j < 5 && pass; ++j) {
        const double rel = std::abs(2.0 * m2[j] - m1[j]) / m1[j];
        worst_scaling = std::max(worst_scaling, rel);
        if (rel > 1e-3) pass = false;
    }
    report(3, pass, "exact pencil scaling and alpha-scaling of Maxwell eigenvalues");
    detail("entrywise |spectrum(2I, tau/4) - spectrum(I, tau)/2| = %.3e (limit 1e-10)",
           worst_identity);
    detail("worst |alpha lam[alpha I] / lam[I] - 1| = %.3e (limit 1e-3)", worst_scaling);
}

// ------------------------------------------------------------------ C4 ----

void criterion_4() {
    const auto rule = geometry::gauss_rule(5);
    const auto mesh = geometry::build_box_mesh({kPi, 1.1 * kPi, 1.3 * kPi}, {8, 8, 8});
    const double tau = 1.25;
    const Spectrum s = maxwell_spectrum(mesh, rule, kIdentity, tau, 8);
    const auto pencil = assembly::assemble_pencil(mesh, rule, kIdentity, tau);

    // the continuum (1,1,1) polarization pair is degenerate on every box, so
    // the five lowest *simple* Maxwell eigenvalues carry the check; the pair
    // is reported below and drives the refinement part
    std::vector<int> simple;
    std::vector<int> pair;
    for (int idx : s.maxwell_indices()) {
        const auto& cluster = s.clusters[static_cast<std::size_t>(
            s.entries[static_cast<std::size_t>(idx)].cluster)];
        if (cluster.size() == 1 && static_cast<int>(simple.size()) < 5)
            simple.push_back(idx);
        else if (cluster.size() == 2 && pair.empty())
            pair = cluster;
    }

    bool pass = simple.size() == 5 && pair.size() == 2;
    double worst_hf = 0.0, worst_rich = 0.0, worst_paper = 0.0;
    double pair_paper_8 = 0.0, pair_hf_8 = 0.0;

    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Sym3> raws;
    for (int d = 0; d < 3; ++d) {
        Sym3 raw{};
        for (int i = 0; i < 6; ++i) raw.a[i] = u(rng);
        raws.push_back(raw);
    }

    for (int d = 0; d < 3 && pass; ++d) {
        const auto eta = material::make_constant_direction(raws[d], 0.02);
        const auto meta =
            assembly::reduce(assembly::assemble_mass(mesh, rule, eta.field), pencil.dof_map);
        Spectrum sp2, sm2, sp3, sm3;
        sp2 = compute_spectrum(mesh, rule, material::perturbed(kIdentity, 1e-2, eta), tau, 8);
        sm2 = compute_spectrum(mesh, rule, material::perturbed(kIdentity, -1e-2, eta), tau, 8);
        sp3 = compute_spectrum(mesh, rule, material::perturbed(kIdentity, 1e-3, eta), tau, 8);
        sm3 = compute_spectrum(mesh, rule, material::perturbed(kIdentity, -1e-3, eta), tau, 8);
        for (int idx : simple) {
            const double hf = discrete_eigenvalue_derivative(mesh, rule, pencil, kIdentity, eta,
                                                             s.sigma(idx), s.vectors.col(idx));
            const double fd2 = (sp2.sigma(idx) - sm2.sigma(idx)) / 2e-2;
            const double fd3 = (sp3.sigma(idx) - sm3.sigma(idx)) / 2e-3;
            const double paper =
                -s.sigma(idx) * s.vectors.col(idx).dot(meta * s.vectors.col(idx));
            const double hf_rel = std::abs(hf - fd3) / std::abs(fd3);
            const double rich = std::abs(fd2 - fd3) / std::abs(fd3);
            const double paper_rel = std::abs(paper - fd3) / std::abs(fd3);
            worst_hf = std::max(worst_hf, hf_rel);
            worst_rich = std::max(worst_rich, rich);
            worst_paper = std::max(worst_paper, paper_rel);
            if (hf_rel > 1e-6 || rich > 0.01 || paper_rel > 5e-3) pass = false;
        }
        if (d == 0 && pair.size() == 2) {
            // informational: the near-degenerate pair at this mesh
            for (int idx : pair) {
                const double hf = discrete_eigenvalue_derivative(
                    mesh, rule, pencil, kIdentity, eta, s.sigma(idx), s.vectors.col(idx));
                const double fd3 = (sp3.sigma(idx) - sm3.sigma(idx)) / 2e-3;
                const double paper =
                    -s.sigma(idx) * s.vectors.col(idx).dot(meta * s.vectors.col(idx));
                pair_hf_8 = std::max(pair_hf_8, std::abs(hf - fd3) / std::abs(fd3));
                pair_paper_8 = std::max(pair_paper_8, std::abs(paper - fd3) / std::abs(fd3));
            }
        }
    }

    // refinement: the measurable paper-vs-FD gap lives on the pair modes;
    // it must shrink from 8^3 to 12^3
    double pair_paper_12 = 0.0;
    if (pass) {
        const auto fine = geometry::build_box_mesh({kPi, 1.1 * kPi, 1.3 * kPi}, {12, 12, 12});
        const auto pfine = assembly::assemble_pencil(fine, rule, kIdentity, tau);
        const auto sol = eigensolve::solve_gsym(pfine.left(), pfine.M, 5, 1e-9);
        const auto eta = material::make_constant_direction(raws[0], 0.02);
        const auto meta =
            assembly::reduce(assembly::assemble_mass(fine, rule, eta.field), pfine.dof_map);
        const auto pp = assembly::assemble_pencil(fine, rule,
                                                  material::perturbed(kIdentity, 1e-3, eta), tau);
        const auto pm = assembly::assemble_pencil(fine, rule,
                                                  material::perturbed(kIdentity, -1e-3, eta), tau);
        const auto solp = eigensolve::solve_gsym(pp.left(), pp.M, 5, 1e-9);
        const auto solm = eigensolve::solve_gsym(pm.left(), pm.M, 5, 1e-9);
        for (int idx : {3, 4}) { // the pair sits at sorted positions 4 and 5
            const double fd = (solp.values(idx) - solm.values(idx)) / 2e-3;
            const double paper =
                -sol.values(idx) * sol.vectors.col(idx).dot(meta * sol.vectors.col(idx));
            pair_paper_12 = std::max(pair_paper_12, std::abs(paper - fd) / std::abs(fd));
        }
        if (!(pair_paper_12 < pair_paper_8)) pass = false;
    }

    report(4, pass, "derivative correctness on the anisotropic box (simple Maxwell modes)");
    detail("five simple Maxwell: worst HF vs FD %.2e (limit 1e-6), Richardson %.2e (limit 1e-2)",
           worst_hf, worst_rich);
    detail("paper formula vs FD %.2e (limit 5e-3)", worst_paper);
    detail("continuum-degenerate (1,1,1) pair, informational: HF %.2e paper %.2e at 8^3",
           pair_hf_8, pair_paper_8);
    detail("pair paper error under refinement: %.3e (8^3) -> %.3e (12^3)", pair_paper_8,
           pair_paper_12);
}

// ------------------------------------------------------------------ C5 ----

void criterion_5() {
    const auto rule = geometry::gauss_rule(5);
    const auto mesh = geometry::build_box_mesh({kPi, 1.1 * kPi, 1.3 * kPi}, {8, 8, 8});
    const Spectrum s = maxwell_spectrum(mesh, rule, kIdentity, 1.25, 8);
    const auto pencil = assembly::assemble_pencil(mesh, rule, kIdentity, 1.25);
    const auto eye = material::make_constant_direction(Sym3::identity(), 1.0);

    bool pass = false;
    double worst = 0.0;
    int checked = 0;
    for (int idx : s.maxwell_indices()) {
        const auto& cluster = s.clusters[static_cast<std::size_t>(
            s.entries[static_cast<std::size_t>(idx)].cluster)];
        if (cluster.size() != 1) continue;
        MatrixXd basis = s.vectors.col(idx);
        const MatrixXd gram = eta_gram(mesh, rule, pencil, eye, basis);
        std::vector<ClusterBlock> blocks(1);
        blocks[0].indices = {idx};
        blocks[0].value = s.sigma(idx);
        blocks[0].eta_trace = gram(0, 0);
        const double deriv = symmetric_function_derivative(blocks, 1);
        worst = std::max(worst, std::abs(deriv + s.sigma(idx)) / s.sigma(idx));
        ++checked;
    }
    pass = checked >= 5 && worst <= 1e-8;
    report(5, pass, "trivial derivative anchor: d lambda[I] = -lambda for eta = I");
    detail("checked %d simple Maxwell eigenvalues, worst |deriv + lambda|/lambda = %.2e", checked,
           worst);
}

// -------------------------------------------------------------- C6, C7 ----

void criteria_6_and_7() {
    const auto rule = geometry::gauss_rule(5);
    const auto mesh = geometry::build_box_mesh({kPi, kPi, kPi}, {8, 8, 8});
    const double tau = 1.0;
    const Spectrum s = maxwell_spectrum(mesh, rule, kIdentity, tau, 8);
    const auto pencil = assembly::assemble_pencil(mesh, rule, kIdentity, tau);
    const auto& cluster = s.clusters[0];
    const int m = static_cast<int>(cluster.size());
    const double lam = s.sigma(cluster[0]);

    bool pass6 = m == 3;
    const auto eta = diagonal_bump_direction(mesh, rule);
    MatrixXd basis(s.vectors.rows(), m);
    for (int i = 0; i < m; ++i) basis.col(i) = s.vectors.col(cluster[i]);
    const MatrixXd gram = eta_gram(mesh, rule, pencil, eta, basis);
    const MatrixXd rn = rellich_nagy_matrix(lam, gram);
    const VectorXd slopes = branch_slopes(rn);

    // FD branch slopes through the degenerate point: the sorted order
    // reverses across t = 0
    const double dt = 1e-3;
    const Spectrum sp = compute_spectrum(mesh, rule, material::perturbed(kIdentity, dt, eta), tau, 8);
    const Spectrum sm = compute_spectrum(mesh, rule, material::perturbed(kIdentity, -dt, eta), tau, 8);
    double worst_slope = 0.0;
    for (int i = 0; i < m && pass6; ++i) {
        const double fd = (sp.sigma(i) - sm.sigma(m - 1 - i)) / (2.0 * dt);
        const double rel = std::abs(fd - slopes(i)) / std::abs(slopes(i));
        worst_slope = std::max(worst_slope, rel);
        if (rel > 0.01) pass6 = false;
    }

    // trace identity against the symmetric-function derivative
    std::vector<ClusterBlock> blocks(1);
    blocks[0].indices = cluster;
    blocks[0].value = lam;
    blocks[0].eta_trace = gram.trace();
    const double dl1 = symmetric_function_derivative(blocks, 1);
    const double trace_gap = std::abs(rn.trace() - dl1);
    if (trace_gap > 1e-10) pass6 = false;

    report(6, pass6, "Rellich-Nagy slopes match FD branch slopes; trace identity");
    detail("slopes: %.6f %.6f %.6f, worst FD mismatch %.2e (limit 1e-2)", slopes(0), slopes(1),
           slopes(2), worst_slope);
    detail("|trace(RN) - dLambda_{F,1}| = %.2e (limit 1e-10)", trace_gap);

    // C7: one-sided slopes across the splitting path
    const Spectrum sp2 =
        compute_spectrum(mesh, rule, material::perturbed(kIdentity, 2 * dt, eta), tau, 8);
    const Spectrum sm2 =
        compute_spectrum(mesh, rule, material::perturbed(kIdentity, -2 * dt, eta), tau, 8);

    double kink = 0.0;
    for (int i = 0; i < m; ++i) {
        const double right = (sp.sigma(i) - s.sigma(i)) / dt;
        const double left = (s.sigma(i) - sm.sigma(i)) / dt;
        kink = std::max(kink, std::abs(right - left));
    }
    bool pass7 = kink > 1e-2 * lam;

    double worst_lambda_gap = 0.0;
    for (int deg = 1; deg <= m; ++deg) {
        auto lam_of = [&](const Spectrum& sx) {
            std::vector<double> v;
            for (int i = 0; i < m; ++i) v.push_back(sx.sigma(i));
            return symmetric_function(v, deg);
        };
        const double l0 = lam_of(s);
        const double right = (-3 * l0 + 4 * lam_of(sp) - lam_of(sp2)) / (2 * dt);
        const double left = (3 * l0 - 4 * lam_of(sm) + lam_of(sm2)) / (2 * dt);
        const double gap = std::abs(right - left);
        worst_lambda_gap = std::max(worst_lambda_gap, gap / std::max(1.0, std::abs(l0)));
        if (gap > 1e-3 * std::max(1.0, std::abs(l0))) pass7 = false;
    }
    report(7, pass7, "crossing: sorted branches kink while symmetric functions stay smooth");
    detail("max one-sided slope mismatch of sorted eigenvalues %.4f (needs > %.4f)", kink,
           1e-2 * lam);
    detail("worst relative one-sided gap of Lambda_{F,s} %.2e (limit 1e-3)", worst_lambda_gap);
}

// ------------------------------------------------------------------ C8 ----

void criterion_8() {
    const auto rule = geometry::gauss_rule(5);
    const auto mesh = geometry::build_box_mesh({kPi, kPi, kPi}, {8, 8, 8});
    const Spectrum s = maxwell_spectrum(mesh, rule, kIdentity, 1.0, 8);
    bool pass = false;
    try {
        const auto res = split_cluster(mesh, rule, kIdentity, 1.0, s, 0, 0.1);
        const double lam = s.sigma(0);
        pass = res.t < 0.1 && res.min_gap > 1e-3 * lam;
        report(8, pass, "split_cluster separates the multiplicity-3 cluster");
        detail("candidate %d, t = %.4f, sub-eigenvalues %.6f %.6f %.6f", res.candidate, res.t,
               res.sub_values(0), res.sub_values(1), res.sub_values(2));
        detail("min pairwise gap %.3e (needs > %.3e)", res.min_gap, 1e-3 * lam);
        // first-order prediction quality (slope-dispersion shortcut)
        double worst_pred = 0.0;
        for (int i = 0; i + 1 < 3; ++i) {
            const double predicted = res.t * (res.predicted_slopes(i + 1) - res.predicted_slopes(i));
            const double realized = res.sub_values(i + 1) - res.sub_values(i);
            worst_pred = std::max(worst_pred, std::abs(predicted - realized) /
                                                  std::max(std::abs(realized), 1e-300));
        }
        detail("prediction vs realized gaps within %.1f%% (informational, expect < 20%%)",
               100.0 * worst_pred);
    } catch (const NoSplitFoundError& e) {
        report(8, false, "split_cluster separates the multiplicity-3 cluster");
        detail("no split found: %s", e.what());
    }
}

// ------------------------------------------------------------------ C9 ----

void criterion_9() {
    const auto rule = geometry::gauss_rule(5);
    const auto mesh = geometry::build_box_mesh({kPi, kPi, kPi}, {8, 8, 8});
    const auto res = genericity_search(mesh, rule, kIdentity, 5, 0.1, 8, 2.0);
    const bool pass = res.success && res.distance_moved <= 0.1;
    report(9, pass, "genericity search: first five Maxwell eigenvalues simple within delta");
    detail("success=%d after %zu steps, moved %.4f (limit 0.1)", res.success, res.steps.size(),
           res.distance_moved);
    if (res.maxwell_values.size() >= 5)
        detail("maxwell: %.6f %.6f %.6f %.6f %.6f", res.maxwell_values[0], res.maxwell_values[1],
               res.maxwell_values[2], res.maxwell_values[3], res.maxwell_values[4]);
}

// ----------------------------------------------------------------- C10 ----

void criterion_10() {
    const auto rule = geometry::gauss_rule(5);
    const auto mesh = geometry::build_box_mesh({kPi, kPi, kPi}, {5, 5, 5});
    const double tau = 1.0;
    const int j = 1;
    std::mt19937_64 rng(0xCAFE);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> radius(0.05, 1.0);

    auto random_member = [&]() {
        Sym3 raw{};
        for (int i = 0; i < 6; ++i) raw.a[i] = u(rng);
        const double d = radius(rng) * 0.1;
        return PermittivityField{MatrixField::combination(
            MatrixField::identity(), {{d / raw.max_abs_entry(), MatrixField::constant(raw)}})};
    };

    bool pass = true;
    double rmax_seen = 0.0;
    int used = 0;
    for (int p = 0; p < 50; ++p) {
        const auto e1 = random_member();
        const auto e2 = random_member();
        try {
            const double ratio = lipschitz_ratio(mesh, rule, e1, e2, j, tau);
            if (!std::isfinite(ratio)) pass = false;
            rmax_seen = std::max(rmax_seen, ratio);
            ++used;
        } catch (const std::invalid_argument&) {
            // coincident samples: distance zero is excluded by the contract
        }
    }

    double worst_spread = 0.0;
    for (int d = 0; d < 3; ++d) {
        Sym3 raw{};
        for (int i = 0; i < 6; ++i) raw.a[i] = u(rng);
        const auto dir = material::make_constant_direction(raw, 1.0);
        double lo = 1e300, hi = 0.0;
        for (double dist : {1e-1, 1e-2, 1e-3, 1e-4}) {
            const auto moved = material::perturbed(kIdentity, dist, dir);
            const double ratio = lipschitz_ratio(mesh, rule, kIdentity, moved, j, tau);
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
        }
        worst_spread = std::max(worst_spread, hi / lo);
        if (hi / lo >= 3.0) pass = false;
    }
    report(10, pass, "Lipschitz sweep: finite ratios, no blow-up as distance shrinks");
    detail("%d random pairs, max ratio %.4f", used, rmax_seen);
    detail("max over min across nested distances %.3f (limit 3)", worst_spread);
}

// ----------------------------------------------------------------- C11 ----

void criterion_11() {
    std::mt19937 rng(424242);
    std::normal_distribution<double> g(0.0, 1.0);
    bool pass = true;
    double worst_val = 0.0, worst_gram = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 50;
        MatrixXd a(n, n), b(n, n);
        for (int jc = 0; jc < n; ++jc)
            for (int i = 0; i < n; ++i) {
                a(i, jc) = g(rng);
                b(i, jc) = g(rng);
            }
        const MatrixXd spd_a = a * a.transpose() + 0.5 * MatrixXd::Identity(n, n);
        const MatrixXd spd_b = b * b.transpose() + n * MatrixXd::Identity(n, n);
        const VectorXd truth = oracle::pencil_eigenvalues(spd_a, spd_b);
        const auto sol =
            eigensolve::solve_gsym(spd_a.sparseView(), spd_b.sparseView(), 10, 1e-10);
        for (int i = 0; i < 10; ++i) {
            worst_val = std::max(worst_val, std::abs(sol.values(i) - truth(i)));
            if (std::abs(sol.values(i) - truth(i)) > 1e-8) pass = false;
        }
        worst_gram = std::max(worst_gram, sol.gram_error);
        if (sol.gram_error > 1e-10) pass = false;
    }
    report(11, pass, "eigensolver matches the dense brute-force oracle on 50 random pencils");
    detail("worst |value - oracle| = %.2e (limit 1e-8), worst Gram error %.2e (limit 1e-10)",
           worst_val, worst_gram);
}

} // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criteria_6_and_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();
    std::printf("acceptance: %d of 11 criteria failed (%.1fs total)\n", g_failures,
                wall_seconds(t0));
    return g_failures;
}
