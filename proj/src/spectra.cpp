#include "cavspec/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace cavspec::spectra {

using material::MatrixField;
using material::SamplingSpec;

const char* family_name(Family f) {
    switch (f) {
    case Family::Maxwell: return "maxwell";
    case Family::Gradient: return "gradient";
    case Family::Ambiguous: return "ambiguous";
    }
    return "?";
}

std::vector<int> Spectrum::maxwell_indices() const {
    std::vector<int> idx;
    for (int i = 0; i < size(); ++i)
        if (entries[static_cast<std::size_t>(i)].label == Family::Maxwell) idx.push_back(i);
    return idx;
}

bool Spectrum::has_ambiguous() const {
    for (const auto& e : entries)
        if (e.label == Family::Ambiguous) return true;
    return false;
}

namespace {

void build_clusters(Spectrum& s, double cluster_tol) {
    s.clusters.clear();
    for (int i = 0; i < s.size(); ++i) {
        const double sigma = s.sigma(i);
        const bool extend =
            i > 0 && (sigma - s.sigma(i - 1)) <= cluster_tol * std::max(1.0, sigma);
        if (!extend) s.clusters.emplace_back();
        s.clusters.back().push_back(i);
        s.entries[static_cast<std::size_t>(i)].cluster = static_cast<int>(s.clusters.size()) - 1;
    }
}

Spectrum raw_spectrum(const Mesh& mesh, const QuadratureRule& rule, const PermittivityField& eps,
                      double tau, int k, const SpectrumTols& tols) {
    const auto pencil = assembly::assemble_pencil(mesh, rule, eps, tau);
    const SpMat a = pencil.left();
    const auto sol = eigensolve::solve_gsym(a, pencil.M, k, tols.solver_tol);

    Spectrum s;
    s.tau = tau;
    s.vectors = sol.vectors;
    s.gram_error = sol.gram_error;
    s.residuals = sol.residuals;
    s.entries.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        auto& e = s.entries[static_cast<std::size_t>(i)];
        e.sigma = sol.values(i);
        const VectorXd& u = sol.vectors.col(i);
        const double pu = u.dot(pencil.P * u);
        const double mu = u.dot(pencil.M * u);
        e.div_residual = std::sqrt(std::max(pu, 0.0) / std::max(mu, 1e-300));
        e.label = Family::Ambiguous;
    }
    build_clusters(s, tols.cluster_tol);
    return s;
}

std::vector<double> dirichlet_covering(const Mesh& mesh, const QuadratureRule& rule,
                                       const PermittivityField& eps, double tau, double sigma_max,
                                       double tol) {
    const auto pencil = assembly::assemble_scalar_pencil(mesh, rule, eps);
    const int dim = pencil.dof_map.reduced_dim;
    if (dim == 0) return {};
    int k = std::min(dim, 8);
    for (;;) {
        const auto sol = eigensolve::solve_gsym(pencil.K, pencil.M, k, tol);
        if (tau * sol.values(k - 1) >= sigma_max || k == dim) {
            std::vector<double> rho(sol.values.data(), sol.values.data() + k);
            return rho;
        }
        k = std::min(dim, 2 * k);
    }
}

int binomial(int n, int r) {
    if (r < 0 || r > n) return 0;
    long long acc = 1;
    for (int i = 1; i <= r; ++i) acc = acc * (n - r + i) / i;
    return static_cast<int>(acc);
}

double ipow(double x, int e) {
    double acc = 1.0;
    for (int i = 0; i < e; ++i) acc *= x;
    return acc;
}

// order-preserving assignment of m sorted predictions to m of the sorted
// candidates, minimizing the total absolute mismatch
std::vector<int> monotone_match(const std::vector<double>& predictions,
                                const std::vector<double>& candidates) {
    const int m = static_cast<int>(predictions.size());
    const int n = static_cast<int>(candidates.size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> cost(static_cast<std::size_t>(m + 1),
                                          std::vector<double>(static_cast<std::size_t>(n + 1), inf));
    std::vector<std::vector<int>> take(static_cast<std::size_t>(m + 1),
                                       std::vector<int>(static_cast<std::size_t>(n + 1), 0));
    for (int j = 0; j <= n; ++j) cost[0][static_cast<std::size_t>(j)] = 0.0;
    for (int i = 1; i <= m; ++i)
        for (int j = i; j <= n; ++j) {
            const double skip = cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j - 1)];
            const double used =
                cost[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)] +
                std::abs(predictions[static_cast<std::size_t>(i - 1)] -
                         candidates[static_cast<std::size_t>(j - 1)]);
            if (used <= skip) {
                cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = used;
                take[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 1;
            } else {
                cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = skip;
            }
        }
    std::vector<int> pick(static_cast<std::size_t>(m), -1);
    int i = m, j = n;
    while (i > 0) {
        if (take[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
            pick[static_cast<std::size_t>(i - 1)] = j - 1;
            --i;
        }
        --j;
    }
    return pick;
}

} // namespace

Spectrum compute_spectrum(const Mesh& mesh, const QuadratureRule& rule,
                          const PermittivityField& eps, double tau, int k,
                          const SpectrumTols& tols) {
    Spectrum s = raw_spectrum(mesh, rule, eps, tau, k, tols);
    const double sigma_max = s.size() ? s.sigma(s.size() - 1) : 0.0;
    s.dirichlet = dirichlet_covering(mesh, rule, eps, tau, sigma_max, tols.solver_tol);
    classify(s, s.dirichlet, tau, tols);
    return s;
}

void classify(Spectrum& spectrum, const std::vector<double>& dirichlet_values, double tau,
              const SpectrumTols& tols) {
    if (!spectrum.entries.empty()) {
        const double sigma_max = spectrum.sigma(spectrum.size() - 1);
        const double covered =
            dirichlet_values.empty() ? 0.0 : tau * dirichlet_values.back() * (1.0 + tols.match_tol);
        if (covered < sigma_max)
            throw CoverageError("classify: Dirichlet list does not cover the spectral window");
    }
    for (auto& e : spectrum.entries) {
        const double scale = std::max(e.sigma, 1e-8);
        bool rho_match = false;
        for (double rho : dirichlet_values)
            if (std::abs(e.sigma - tau * rho) <= tols.match_tol * scale) {
                rho_match = true;
                break;
            }
        const bool small_div = e.div_residual <= tols.r_max;
        if (rho_match && !small_div)
            e.label = Family::Gradient;
        else if (small_div && !rho_match)
            e.label = Family::Maxwell;
        else
            e.label = Family::Ambiguous;
    }

    // Cluster amendment: the two families span the spectrum, so a cluster
    // can hold at most as many gradient copies as the Dirichlet list has
    // matching values (counted with multiplicity).  At an exact overlap the
    // solver basis mixes the families and the per-entry residuals are not
    // individually meaningful; the surplus entries go back to ambiguous for
    // the tau-shift pass to settle.
    for (const auto& cluster : spectrum.clusters) {
        double v = 0.0;
        for (int idx : cluster) v += spectrum.sigma(idx);
        v /= static_cast<double>(cluster.size());
        const double scale = std::max(v, 1e-8);
        int g = 0;
        for (double rho : dirichlet_values)
            if (std::abs(v - tau * rho) <= tols.match_tol * scale) ++g;
        const int msize = static_cast<int>(cluster.size());
        if (g == 0 || msize <= g) continue;
        std::vector<int> by_residual(cluster.begin(), cluster.end());
        std::sort(by_residual.begin(), by_residual.end(), [&](int a, int b) {
            return spectrum.entries[static_cast<std::size_t>(a)].div_residual <
                   spectrum.entries[static_cast<std::size_t>(b)].div_residual;
        });
        for (int i = 0; i < msize - g; ++i) {
            auto& e =
                spectrum.entries[static_cast<std::size_t>(by_residual[static_cast<std::size_t>(i)])];
            if (e.label == Family::Gradient) e.label = Family::Ambiguous;
        }
    }
}

Spectrum resolve_with_tau_shift(Spectrum spectrum, const Mesh& mesh, const QuadratureRule& rule,
                                const PermittivityField& eps, int k, const SpectrumTols& tols) {
    if (!spectrum.has_ambiguous()) return spectrum;
    const double tau2 = 0.7 * spectrum.tau;
    const Spectrum shifted = raw_spectrum(mesh, rule, eps, tau2, k, tols);
    const double ratio = tau2 / spectrum.tau;

    // Work cluster by cluster: at an exact Maxwell/gradient overlap the
    // solver returns a mixed basis, so per-entry residuals cannot be
    // trusted individually.  Count how many copies persist at the shifted
    // tau (those are Maxwell; gradient copies moved by the tau ratio) and
    // assign that many Maxwell labels, smallest divergence residual first.
    for (const auto& cluster : spectrum.clusters) {
        bool any_ambiguous = false;
        for (int idx : cluster)
            if (spectrum.entries[static_cast<std::size_t>(idx)].label == Family::Ambiguous)
                any_ambiguous = true;
        if (!any_ambiguous) continue;

        double v = 0.0;
        for (int idx : cluster) v += spectrum.sigma(idx);
        v /= static_cast<double>(cluster.size());
        const double scale = std::max(v, 1e-8);

        int persisted = 0, moved = 0;
        for (const auto& o : shifted.entries) {
            if (std::abs(o.sigma - v) <= tols.match_tol * scale) ++persisted;
            if (std::abs(o.sigma - ratio * v) <= tols.match_tol * scale) ++moved;
        }
        const int msize = static_cast<int>(cluster.size());
        const int n_maxwell = std::min(persisted, msize);

        std::vector<int> by_residual(cluster.begin(), cluster.end());
        std::sort(by_residual.begin(), by_residual.end(), [&](int a, int b) {
            return spectrum.entries[static_cast<std::size_t>(a)].div_residual <
                   spectrum.entries[static_cast<std::size_t>(b)].div_residual;
        });
        for (int i = 0; i < msize; ++i) {
            auto& e = spectrum.entries[static_cast<std::size_t>(by_residual[static_cast<std::size_t>(i)])];
            if (i < n_maxwell)
                e.label = Family::Maxwell;
            else if (moved > 0)
                e.label = Family::Gradient;
            // otherwise the entry stays ambiguous
        }
    }
    return spectrum;
}

Spectrum maxwell_spectrum(const Mesh& mesh, const QuadratureRule& rule,
                          const PermittivityField& eps, double tau, int k,
                          const SpectrumTols& tols) {
    Spectrum s = compute_spectrum(mesh, rule, eps, tau, k, tols);
    if (s.has_ambiguous()) s = resolve_with_tau_shift(std::move(s), mesh, rule, eps, k, tols);
    return s;
}

std::vector<double> maxwell_eigenvalues(const Spectrum& spectrum) {
    if (spectrum.has_ambiguous())
        throw NeedsTauShiftError(
            "maxwell_eigenvalues: ambiguous entries present; re-run with a shifted tau");
    std::vector<double> lam;
    for (const auto& e : spectrum.entries)
        if (e.label == Family::Maxwell) lam.push_back(e.sigma);
    return lam;
}

double calibrate_r_max(const Mesh& mesh, const QuadratureRule& rule, double solver_tol) {
    SpectrumTols tols;
    tols.solver_tol = solver_tol;
    const PermittivityField id{MatrixField::identity()};
    // tau = 3 keeps the gradient family above the three lowest modes on the
    // reference boxes, so these are known-Maxwell residuals
    Spectrum s = raw_spectrum(mesh, rule, id, 3.0, 3, tols);
    std::array<double, 3> r{s.entries[0].div_residual, s.entries[1].div_residual,
                            s.entries[2].div_residual};
    std::sort(r.begin(), r.end());
    // the lowest box modes can be exactly divergence-free on a tensor grid,
    // which collapses the 5x-median rule; clamp to a usable band
    return std::clamp(5.0 * r[1], 0.1, 0.5);
}

double symmetric_function(const std::vector<double>& values, int s) {
    const int n = static_cast<int>(values.size());
    if (s < 1 || s > n)
        throw std::invalid_argument("symmetric_function: degree out of range");
    std::vector<double> e(static_cast<std::size_t>(s) + 1, 0.0);
    e[0] = 1.0;
    for (double v : values)
        for (int j = std::min(s, n); j >= 1; --j)
            e[static_cast<std::size_t>(j)] += e[static_cast<std::size_t>(j - 1)] * v;
    return e[static_cast<std::size_t>(s)];
}

namespace {

void compositions(const std::vector<int>& sizes, int s, std::vector<int>& cur, int pos, int left,
                  const std::function<void(const std::vector<int>&)>& emit) {
    if (pos == static_cast<int>(sizes.size())) {
        if (left == 0) emit(cur);
        return;
    }
    const int cap = std::min(left, sizes[static_cast<std::size_t>(pos)]);
    for (int v = 0; v <= cap; ++v) {
        cur[static_cast<std::size_t>(pos)] = v;
        compositions(sizes, s, cur, pos + 1, left - v, emit);
    }
}

} // namespace

std::vector<double> symmetric_function_coefficients(const std::vector<ClusterBlock>& blocks,
                                                    int s) {
    const int n = static_cast<int>(blocks.size());
    int total = 0;
    std::vector<int> sizes;
    for (const auto& b : blocks) {
        sizes.push_back(static_cast<int>(b.indices.size()));
        total += sizes.back();
    }
    if (s < 1 || s > total)
        throw std::invalid_argument("symmetric_function_derivative: degree out of range");

    std::vector<double> c(static_cast<std::size_t>(n), 0.0);
    std::vector<int> cur(static_cast<std::size_t>(n), 0);
    compositions(sizes, s, cur, 0, s, [&](const std::vector<int>& sk) {
        for (int k = 0; k < n; ++k) {
            if (sk[static_cast<std::size_t>(k)] == 0) continue;
            double term = binomial(sizes[static_cast<std::size_t>(k)] - 1,
                                   sk[static_cast<std::size_t>(k)] - 1) *
                          ipow(blocks[static_cast<std::size_t>(k)].value,
                               sk[static_cast<std::size_t>(k)]);
            for (int j = 0; j < n; ++j) {
                if (j == k) continue;
                term *= binomial(sizes[static_cast<std::size_t>(j)],
                                 sk[static_cast<std::size_t>(j)]) *
                        ipow(blocks[static_cast<std::size_t>(j)].value,
                             sk[static_cast<std::size_t>(j)]);
            }
            c[static_cast<std::size_t>(k)] += term;
        }
    });
    return c;
}

double symmetric_function_derivative(const std::vector<ClusterBlock>& blocks, int s) {
    const auto c = symmetric_function_coefficients(blocks, s);
    double d = 0.0;
    for (std::size_t k = 0; k < blocks.size(); ++k) d -= c[k] * blocks[k].eta_trace;
    return d;
}

MatrixXd eta_gram(const Mesh& mesh, const QuadratureRule& rule, const OperatorPencil& pencil,
                  const PerturbationDirection& eta, const MatrixXd& basis, double ortho_tol) {
    const MatrixXd g_eps = basis.transpose() * (pencil.M * basis);
    const double err =
        (g_eps - MatrixXd::Identity(basis.cols(), basis.cols())).cwiseAbs().maxCoeff();
    if (err > ortho_tol)
        throw PreconditionError("eta_gram: basis is not M_eps-orthonormal (error " +
                                std::to_string(err) + ")");
    const SpMat meta =
        assembly::reduce(assembly::assemble_mass(mesh, rule, eta.field), pencil.dof_map);
    MatrixXd g = basis.transpose() * (meta * basis);
    return 0.5 * (g + g.transpose());
}

MatrixXd rellich_nagy_matrix(double lambda, const MatrixXd& gram) {
    MatrixXd rn = -lambda * gram;
    return 0.5 * (rn + rn.transpose());
}

VectorXd branch_slopes(const MatrixXd& rn_matrix) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(rn_matrix);
    return es.eigenvalues();
}

double discrete_eigenvalue_derivative(const Mesh& mesh, const QuadratureRule& rule,
                                      const OperatorPencil& pencil,
                                      const PermittivityField& eps,
                                      const PerturbationDirection& eta, double sigma,
                                      const VectorXd& u) {
    if (!eps.has_jacobian() || !eta.field.has_jacobian())
        throw std::invalid_argument(
            "discrete_eigenvalue_derivative: fields must carry reliable jacobians");
    const SpMat pcross = assembly::reduce(
        assembly::assemble_penalty_cross(mesh, rule, eps.field, eta.field), pencil.dof_map);
    const SpMat meta =
        assembly::reduce(assembly::assemble_mass(mesh, rule, eta.field), pencil.dof_map);
    const double num = pencil.tau * u.dot(pcross * u) - sigma * u.dot(meta * u);
    const double den = u.dot(pencil.M * u);
    return num / den;
}

BranchCurves track_branches(const LinearPath& path, const std::vector<double>& tgrid,
                            const Mesh& mesh, const QuadratureRule& rule, double tau,
                            double window_lo, double window_hi, const SpectrumTols& tols) {
    if (tgrid.size() < 2) throw std::invalid_argument("track_branches: need at least two grid points");
    std::vector<double> ts = tgrid;
    std::sort(ts.begin(), ts.end());
    int anchor = -1;
    for (std::size_t i = 0; i < ts.size(); ++i)
        if (std::abs(ts[i]) < 1e-15) anchor = static_cast<int>(i);
    if (anchor < 0) throw std::invalid_argument("track_branches: grid must contain t = 0");

    // how many eigenvalues to request: everything up to the window top plus
    // a safety margin, estimated at the base point
    const int dim = assembly::vector_dof_map(mesh).reduced_dim;
    SpectrumTols quiet = tols;
    Spectrum s0;
    int k = std::min(8, dim);
    for (;;) {
        s0 = raw_spectrum(mesh, rule, path.base, tau, k, quiet);
        if (s0.sigma(s0.size() - 1) > window_hi + 0.25 * std::max(1.0, window_hi) || k == dim)
            break;
        k = std::min(dim, k + k / 2 + 4);
    }

    std::vector<int> in_window;
    for (int i = 0; i < s0.size(); ++i)
        if (s0.sigma(i) >= window_lo && s0.sigma(i) <= window_hi) in_window.push_back(i);
    if (in_window.empty()) throw std::invalid_argument("track_branches: empty window");
    const int m = static_cast<int>(in_window.size());

    // initial slopes: Rellich-Nagy per cluster, ascending within each cluster
    const auto pencil0 = assembly::assemble_pencil(mesh, rule, path.base, tau);
    VectorXd slopes0(m);
    {
        int pos = 0;
        while (pos < m) {
            const int cluster = s0.entries[static_cast<std::size_t>(in_window[static_cast<std::size_t>(pos)])].cluster;
            std::vector<int> members;
            while (pos + static_cast<int>(members.size()) < m &&
                   s0.entries[static_cast<std::size_t>(
                       in_window[static_cast<std::size_t>(pos + members.size())])].cluster ==
                       cluster)
                members.push_back(in_window[static_cast<std::size_t>(pos + members.size())]);
            MatrixXd basis(s0.vectors.rows(), members.size());
            double lam = 0.0;
            for (std::size_t i = 0; i < members.size(); ++i) {
                basis.col(static_cast<Eigen::Index>(i)) = s0.vectors.col(members[i]);
                lam += s0.sigma(members[i]);
            }
            lam /= static_cast<double>(members.size());
            const MatrixXd g = eta_gram(mesh, rule, pencil0, path.direction, basis);
            const VectorXd sl = branch_slopes(rellich_nagy_matrix(lam, g));
            for (std::size_t i = 0; i < members.size(); ++i)
                slopes0(pos + static_cast<int>(i)) = sl(static_cast<Eigen::Index>(i));
            pos += static_cast<int>(members.size());
        }
    }

    BranchCurves out;
    out.t = ts;
    out.values = MatrixXd::Zero(m, static_cast<Eigen::Index>(ts.size()));
    out.slopes_at_base = slopes0;
    for (int i = 0; i < m; ++i)
        out.values(i, anchor) = s0.sigma(in_window[static_cast<std::size_t>(i)]);

    auto march = [&](int from, int to, int step) {
        VectorXd g = out.values.col(from);
        VectorXd slope = slopes0;
        double tprev = ts[static_cast<std::size_t>(from)];
        for (int j = from + step; step > 0 ? j <= to : j >= to; j += step) {
            const double tj = ts[static_cast<std::size_t>(j)];
            const double dt = tj - tprev;
            const Spectrum sj = raw_spectrum(mesh, rule, path.at(tj), tau, k, quiet);
            std::vector<double> preds(static_cast<std::size_t>(m));
            for (int i = 0; i < m; ++i) preds[static_cast<std::size_t>(i)] = g(i) + slope(i) * dt;
            std::vector<double> sorted_preds = preds;
            std::sort(sorted_preds.begin(), sorted_preds.end());
            std::vector<double> cands(static_cast<std::size_t>(sj.size()));
            for (int i = 0; i < sj.size(); ++i) cands[static_cast<std::size_t>(i)] = sj.sigma(i);
            const auto pick = monotone_match(sorted_preds, cands);

            // admissible mismatch: the safety fraction of the local candidate
            // spacing, with a curvature-sized floor; misassignment inside a
            // near-degenerate group costs at most the (tiny) group spread
            double local_gap = std::numeric_limits<double>::infinity();
            for (int i = 0; i + 1 < m; ++i)
                local_gap = std::min(local_gap, sorted_preds[static_cast<std::size_t>(i + 1)] -
                                                    sorted_preds[static_cast<std::size_t>(i)]);
            const double scale = std::max(1.0, std::abs(sorted_preds.back()));
            const double floor = 1e-9 + 5.0 * dt * dt * scale;
            // map sorted predictions back to branch identities
            std::vector<int> order(static_cast<std::size_t>(m));
            for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                return preds[static_cast<std::size_t>(a)] < preds[static_cast<std::size_t>(b)];
            });
            VectorXd gnew(m);
            for (int r = 0; r < m; ++r) {
                const int branch = order[static_cast<std::size_t>(r)];
                const double assigned = cands[static_cast<std::size_t>(pick[static_cast<std::size_t>(r)])];
                const double mismatch = std::abs(assigned - sorted_preds[static_cast<std::size_t>(r)]);
                const double allowed = std::max(m > 1 ? 0.4 * local_gap : 1e300, floor);
                if (mismatch > allowed) {
                    std::ostringstream os;
                    os << "track_branches: prediction mismatch " << mismatch << " exceeds "
                       << allowed << " at t = " << tj << "; refine the t grid";
                    throw TrackingError(os.str());
                }
                gnew(branch) = assigned;
            }
            for (int i = 0; i < m; ++i) slope(i) = (gnew(i) - g(i)) / dt;
            g = gnew;
            out.values.col(j) = g;
            tprev = tj;
        }
    };

    march(anchor, static_cast<int>(ts.size()) - 1, +1);
    march(anchor, 0, -1);
    return out;
}

namespace {

expr::ScalarExpr bump3d(const std::array<double, 3>& extent, const std::array<double, 3>& center_frac,
                        const std::array<double, 3>& radius_frac) {
    expr::ScalarExpr e = expr::ScalarExpr::bump1d(0, center_frac[0] * extent[0],
                                                  radius_frac[0] * extent[0]);
    for (int d = 1; d < 3; ++d)
        e = e * expr::ScalarExpr::bump1d(d, center_frac[static_cast<std::size_t>(d)] * extent[static_cast<std::size_t>(d)],
                                         radius_frac[static_cast<std::size_t>(d)] * extent[static_cast<std::size_t>(d)]);
    return e;
}

// Deterministic candidate dictionary: single-entry directions with a
// centered bump, single-entry with symmetry-breaking offset bumps, then
// composite diagonal directions whose per-axis bumps have distinct radii
// (those split clusters whose modes are polarized along distinct axes).
std::vector<PerturbationDirection> split_candidates(const Mesh& mesh,
                                                    const QuadratureRule& rule) {
    const auto L = mesh.box().extent;
    SamplingSpec sampling{&mesh, &rule, 2};
    std::vector<PerturbationDirection> dict;
    const std::array<double, 3> mid{0.5, 0.5, 0.5};
    const std::array<double, 3> rad_c{0.40, 0.40, 0.40};
    for (int h = 1; h <= 3; ++h)
        dict.push_back(material::make_splitting_direction(h, bump3d(L, mid, rad_c), sampling));
    const std::array<double, 3> off{0.42, 0.46, 0.50};
    const std::array<double, 3> rad_o{0.34, 0.30, 0.26};
    for (int h = 1; h <= 3; ++h)
        dict.push_back(material::make_splitting_direction(h, bump3d(L, off, rad_o), sampling));
    const std::array<double, 3> radii{0.40, 0.32, 0.25};
    for (int rot = 0; rot < 3; ++rot) {
        std::array<expr::ScalarExpr, 3> bumps;
        for (int h = 0; h < 3; ++h) {
            const double r = radii[static_cast<std::size_t>((h + rot) % 3)];
            bumps[static_cast<std::size_t>(h)] = bump3d(L, mid, {r, r, r});
        }
        dict.push_back(material::make_diagonal_direction(bumps, sampling));
    }
    return dict;
}

} // namespace

SplitResult split_cluster(const Mesh& mesh, const QuadratureRule& rule,
                          const PermittivityField& eps, double tau, const Spectrum& spectrum,
                          int cluster_id, double T, const SpectrumTols& tols) {
    if (cluster_id < 0 || cluster_id >= static_cast<int>(spectrum.clusters.size()))
        throw std::invalid_argument("split_cluster: bad cluster id");
    const auto& members = spectrum.clusters[static_cast<std::size_t>(cluster_id)];
    const int m = static_cast<int>(members.size());
    if (m < 2) throw PreconditionError("split_cluster: cluster multiplicity must be >= 2");
    for (int idx : members)
        if (spectrum.entries[static_cast<std::size_t>(idx)].label != Family::Maxwell)
            throw PreconditionError("split_cluster: cluster must be Maxwell-labeled");
    double lambda = 0.0;
    for (int idx : members) lambda += spectrum.sigma(idx);
    lambda /= m;
    if (std::abs(lambda) < 1e-9)
        throw PreconditionError("split_cluster: zero eigenvalue cannot be split this way");
    if (!(T > 0.0)) throw std::invalid_argument("split_cluster: T must be positive");

    // spectral neighbors bracket the admissible movement
    double below = -std::numeric_limits<double>::infinity();
    double above = std::numeric_limits<double>::infinity();
    for (int i = 0; i < spectrum.size(); ++i) {
        if (std::find(members.begin(), members.end(), i) != members.end()) continue;
        const double v = spectrum.sigma(i);
        if (v < lambda && v > below) below = v;
        if (v > lambda && v < above) above = v;
    }

    MatrixXd basis(spectrum.vectors.rows(), m);
    for (int i = 0; i < m; ++i) basis.col(i) = spectrum.vectors.col(members[static_cast<std::size_t>(i)]);
    const auto pencil = assembly::assemble_pencil(mesh, rule, eps, tau);

    const auto dict = split_candidates(mesh, rule);
    const double gap_target = tols.gap_min * std::max(1.0, std::abs(lambda));
    double best_gap = -1.0;
    int best_candidate = -1;

    for (int ci = 0; ci < static_cast<int>(dict.size()); ++ci) {
        const auto& eta = dict[static_cast<std::size_t>(ci)];
        const MatrixXd g = eta_gram(mesh, rule, pencil, eta, basis);
        const VectorXd slopes = branch_slopes(rellich_nagy_matrix(lambda, g));
        double disp = std::numeric_limits<double>::infinity();
        for (int i = 0; i + 1 < m; ++i) disp = std::min(disp, slopes(i + 1) - slopes(i));
        if (disp < 1e-6 * std::max(1.0, std::abs(lambda))) continue; // first order cannot split

        // first-order prediction picks the step; safety factor 2 on the gap
        double t = 2.0 * gap_target / disp;
        const double spread = slopes.cwiseAbs().maxCoeff();
        const double room = 0.25 * std::min(lambda - below, above - lambda);
        if (spread > 0.0 && std::isfinite(room)) t = std::min(t, room / spread);
        t = std::min(t, 0.9 * T);

        for (int attempt = 0; attempt < 3 && t > 0.0; ++attempt, t *= 0.5) {
            const PermittivityField pert = material::perturbed(eps, t, eta);
            const int kneed = std::min(members.back() + 4, pencil.dof_map.reduced_dim);
            Spectrum ps;
            try {
                ps = maxwell_spectrum(mesh, rule, pert, tau, kneed, tols);
            } catch (const CoverageError&) {
                continue;
            }
            // the m perturbed values continuing the cluster, by prediction
            std::vector<double> preds(static_cast<std::size_t>(m));
            for (int i = 0; i < m; ++i) preds[static_cast<std::size_t>(i)] = lambda + t * slopes(i);
            std::vector<double> cands(static_cast<std::size_t>(ps.size()));
            for (int i = 0; i < ps.size(); ++i) cands[static_cast<std::size_t>(i)] = ps.sigma(i);
            const auto pick = monotone_match(preds, cands);
            VectorXd sub(m);
            bool maxwell_ok = true;
            for (int i = 0; i < m; ++i) {
                const int idx = pick[static_cast<std::size_t>(i)];
                sub(i) = cands[static_cast<std::size_t>(idx)];
                if (ps.entries[static_cast<std::size_t>(idx)].label != Family::Maxwell)
                    maxwell_ok = false;
            }
            double min_gap = std::numeric_limits<double>::infinity();
            for (int i = 0; i + 1 < m; ++i) min_gap = std::min(min_gap, sub(i + 1) - sub(i));
            // continuity safeguard: stay inside the bracket of the old
            // neighbors and keep them outside the split fan
            bool separated = true;
            const double lo = std::isfinite(below) ? 0.5 * (below + lambda) : -1e300;
            const double hi = std::isfinite(above) ? 0.5 * (above + lambda) : 1e300;
            if (sub(0) < lo || sub(m - 1) > hi) separated = false;
            for (int i = 0; i < ps.size(); ++i) {
                if (std::find(pick.begin(), pick.end(), i) != pick.end()) continue;
                const double v = ps.sigma(i);
                if (v > sub(0) - gap_target && v < sub(m - 1) + gap_target) separated = false;
            }
            if (min_gap > best_gap) {
                best_gap = min_gap;
                best_candidate = ci;
            }
            if (maxwell_ok && separated && min_gap > gap_target) {
                SplitResult res;
                res.eta = eta;
                res.t = t;
                res.sub_values = sub;
                res.min_gap = min_gap;
                res.candidate = ci;
                res.predicted_slopes = slopes;
                return res;
            }
        }
    }
    std::ostringstream os;
    os << "split_cluster: no candidate achieved gaps > " << gap_target << " (best "
       << best_gap << " from candidate " << best_candidate << ")";
    throw NoSplitFoundError(os.str(), best_gap, best_candidate);
}

GenericityResult genericity_search(const Mesh& mesh, const QuadratureRule& rule,
                                   const PermittivityField& eps, int n, double delta, int budget,
                                   double tau, const SpectrumTols& tols) {
    if (n < 1) throw std::invalid_argument("genericity_search: n must be >= 1");
    if (!(delta > 0.0)) throw std::invalid_argument("genericity_search: delta must be positive");
    const auto coercivity = material::audit_admissibility(eps, mesh, rule);
    // |c_eps2 - c_eps1| <= 3 ||eps2 - eps1|| keeps the whole delta-ball admissible
    if (3.0 * delta >= coercivity.c_eps)
        throw std::invalid_argument(
            "genericity_search: delta too large to certify admissibility of the search ball");

    GenericityResult result;
    result.eps = eps;
    double moved = 0.0;

    const int dim = assembly::vector_dof_map(mesh).reduced_dim;
    for (int step = 1; step <= budget + 1; ++step) {
        int k = std::min(n + 5, dim);
        Spectrum s;
        std::vector<int> mw;
        for (int grow = 0; grow < 4; ++grow) {
            s = maxwell_spectrum(mesh, rule, result.eps, tau, k, tols);
            mw = s.maxwell_indices();
            if (static_cast<int>(mw.size()) >= n + 1 || k == dim) break;
            k = std::min(dim, k + k / 2 + 4);
        }
        if (static_cast<int>(mw.size()) < n + 1)
            throw CoverageError("genericity_search: could not expose n+1 Maxwell eigenvalues");

        // lowest cluster with >= 2 Maxwell members among the first n
        int target_cluster = -1;
        int reached = n;
        for (int i = 0; i < n; ++i) {
            const int cluster = s.entries[static_cast<std::size_t>(mw[static_cast<std::size_t>(i)])].cluster;
            int count = 0;
            for (int idx : s.clusters[static_cast<std::size_t>(cluster)])
                if (s.entries[static_cast<std::size_t>(idx)].label == Family::Maxwell) ++count;
            if (count >= 2) {
                target_cluster = cluster;
                reached = i;
                break;
            }
        }

        result.maxwell_values.assign(static_cast<std::size_t>(n + 1), 0.0);
        for (int i = 0; i <= n; ++i)
            result.maxwell_values[static_cast<std::size_t>(i)] = s.sigma(mw[static_cast<std::size_t>(i)]);
        result.gaps.clear();
        for (int i = 0; i < n; ++i) {
            const double a = s.sigma(mw[static_cast<std::size_t>(i)]);
            const double b = s.sigma(mw[static_cast<std::size_t>(i + 1)]);
            result.gaps.push_back((b - a) / std::max(1.0, b));
        }

        if (target_cluster < 0) {
            result.success = true;
            result.simple_up_to = n;
            result.distance_moved = moved;
            return result;
        }
        result.simple_up_to = reached;
        result.distance_moved = moved;
        if (step > budget) return result; // budget exhausted: partial result

        const double t_cap = std::min(delta / std::pow(2.0, step), delta - moved);
        if (t_cap <= 0.0) return result;
        SplitResult sr;
        try {
            sr = split_cluster(mesh, rule, result.eps, tau, s, target_cluster, t_cap, tols);
        } catch (const NoSplitFoundError&) {
            return result; // partial result with the index reached
        }
        result.eps = material::perturbed(result.eps, sr.t, sr.eta);
        moved += sr.t * sr.eta.norm_estimate;
        GenericityStep info;
        info.cluster_size = static_cast<int>(
            s.clusters[static_cast<std::size_t>(target_cluster)].size());
        info.lambda = s.sigma(s.clusters[static_cast<std::size_t>(target_cluster)].front());
        info.t = sr.t;
        info.candidate = sr.candidate;
        result.steps.push_back(info);
    }
    return result;
}

double lipschitz_ratio(const Mesh& mesh, const QuadratureRule& rule,
                       const PermittivityField& eps1, const PermittivityField& eps2, int j,
                       double tau, const SpectrumTols& tols) {
    if (j < 1) throw std::invalid_argument("lipschitz_ratio: j is 1-based");
    SamplingSpec sampling{&mesh, &rule, 4};
    const double dist = material::w1inf_distance(eps1.field, eps2.field, sampling);
    if (!(dist > 0.0))
        throw std::invalid_argument("lipschitz_ratio: permittivities coincide on all samples");
    const Spectrum s1 = raw_spectrum(mesh, rule, eps1, tau, j, tols);
    const Spectrum s2 = raw_spectrum(mesh, rule, eps2, tau, j, tols);
    return std::abs(s1.sigma(j - 1) - s2.sigma(j - 1)) / dist;
}

} // namespace cavspec::spectra
