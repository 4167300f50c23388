#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cavspec/assembly.hpp"

#include "cavspec/parallel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <sstream>

using namespace cavspec::assembly;
using cavspec::expr::ScalarExpr;
using cavspec::geometry::build_box_mesh;
using cavspec::geometry::gauss_rule;
using cavspec::geometry::Mesh;
using cavspec::geometry::Point;
using cavspec::geometry::QuadratureRule;
using cavspec::material::MatrixField;
using cavspec::material::PermittivityField;
using cavspec::material::Sym3;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr double kPi = 3.14159265358979323846;

double max_asymmetry(const SpMat& m) {
    SpMat d = SpMat(m.transpose()) - m;
    double worst = 0.0;
    for (int k = 0; k < d.outerSize(); ++k)
        for (SpMat::InnerIterator it(d, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
    return worst;
}

// nodal interpolation of an analytic vector field onto the full dof vector
VectorXd interpolate(const Mesh& mesh, const std::array<std::function<double(const Point&)>, 3>& f) {
    VectorXd u = VectorXd::Zero(3 * mesh.node_count());
    for (int n = 0; n < mesh.node_count(); ++n)
        for (int c = 0; c < 3; ++c) u(3 * n + c) = f[static_cast<std::size_t>(c)](mesh.node(n));
    return u;
}

const std::array<std::function<double(const Point&)>, 3> kConstE1 = {
    [](const Point&) { return 1.0; }, [](const Point&) { return 0.0; },
    [](const Point&) { return 0.0; }};
} // namespace

TEST_CASE("constant field lies in the curl-curl kernel") {
    const Mesh mesh = build_box_mesh({1.0, 1.3, 0.8}, {3, 2, 2});
    const QuadratureRule rule = gauss_rule(3);
    const SpMat k = assemble_curlcurl(mesh, rule);
    const VectorXd u = interpolate(mesh, kConstE1);
    CHECK((k * u).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("assembled matrices are exactly symmetric") {
    const Mesh mesh = build_box_mesh({kPi, kPi, kPi}, {3, 3, 3});
    const QuadratureRule rule = gauss_rule(5);
    const MatrixField eps = MatrixField::components(
        {ScalarExpr::parse("1 + 0.3*sin(x)"), ScalarExpr::parse("1 + 0.1*y"),
         ScalarExpr::parse("1"), ScalarExpr::parse("0.2*cos(z)"), ScalarExpr::parse("0.1*x"),
         ScalarExpr::parse("0.05*y*z")});
    CHECK(max_asymmetry(assemble_curlcurl(mesh, rule)) == 0.0);
    CHECK(max_asymmetry(assemble_mass(mesh, rule, eps)) == 0.0);
    CHECK(max_asymmetry(assemble_penalty(mesh, rule, eps)) == 0.0);
    CHECK(max_asymmetry(assemble_penalty_cross(mesh, rule, eps, MatrixField::identity())) == 0.0);
}

TEST_CASE("curl-curl corner entry on the unit cell") {
    // int |curl((1-x)(1-y)(1-z) e1)|^2 over the unit cube = 2/9
    const Mesh mesh = build_box_mesh({1, 1, 1}, {1, 1, 1});
    const QuadratureRule rule = gauss_rule(3);
    const SpMat k = assemble_curlcurl(mesh, rule);
    const int dof = 3 * mesh.node_index(0, 0, 0) + 0;
    CHECK(k.coeff(dof, dof) == doctest::Approx(2.0 / 9.0).epsilon(1e-14));
}

TEST_CASE("penalty: constant fields under constant permittivity") {
    const Mesh mesh = build_box_mesh({1.0, 1.0, 1.0}, {3, 3, 3});
    const QuadratureRule rule = gauss_rule(3);
    const MatrixField eps = MatrixField::constant(Sym3::diagonal(2, 3, 4));
    const SpMat p = assemble_penalty(mesh, rule, eps);
    const VectorXd u = interpolate(mesh, kConstE1);
    CHECK((p * u).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("penalty with identity equals plain div-div") {
    const Mesh mesh = build_box_mesh({1.1, 0.9, 1.4}, {2, 3, 2});
    const QuadratureRule rule = gauss_rule(3);
    const SpMat p = assemble_penalty(mesh, rule, MatrixField::identity());

    // independent assembly: entry = int (d_ci N_a)(d_cj N_b), no div-eps term
    const auto h = mesh.cell_size();
    const double detj = mesh.cell_volume() / 8.0;
    static constexpr int sign[8][3] = {{-1, -1, -1}, {1, -1, -1}, {-1, 1, -1}, {1, 1, -1},
                                       {-1, -1, 1},  {1, -1, 1},  {-1, 1, 1},  {1, 1, 1}};
    const int dim = 3 * mesh.node_count();
    MatrixXd ref = MatrixXd::Zero(dim, dim);
    for (int cell = 0; cell < mesh.cell_count(); ++cell) {
        const auto nodes = mesh.cell_nodes(cell);
        for (int q = 0; q < rule.size(); ++q) {
            const auto& xi = rule.points[static_cast<std::size_t>(q)];
            const double w = rule.weights[static_cast<std::size_t>(q)] * detj;
            std::array<std::array<double, 3>, 8> g{};
            for (int a = 0; a < 8; ++a) {
                const double fx = 0.5 * (1 + sign[a][0] * xi[0]);
                const double fy = 0.5 * (1 + sign[a][1] * xi[1]);
                const double fz = 0.5 * (1 + sign[a][2] * xi[2]);
                g[static_cast<std::size_t>(a)] = {sign[a][0] / h[0] * fy * fz,
                                                  sign[a][1] / h[1] * fx * fz,
                                                  sign[a][2] / h[2] * fx * fy};
            }
            for (int a = 0; a < 8; ++a)
                for (int b = 0; b < 8; ++b)
                    for (int ci = 0; ci < 3; ++ci)
                        for (int cj = 0; cj < 3; ++cj)
                            ref(3 * nodes[static_cast<std::size_t>(a)] + ci,
                                3 * nodes[static_cast<std::size_t>(b)] + cj) +=
                                w * g[static_cast<std::size_t>(a)][static_cast<std::size_t>(ci)] *
                                g[static_cast<std::size_t>(b)][static_cast<std::size_t>(cj)];
        }
    }
    CHECK((MatrixXd(p) - ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("penalty quadratic forms against hand integration") {
    // u = (x, 0, 0) is exactly representable; with eps = I,
    // int (div u)^2 = |Omega| = 1
    const Mesh mesh = build_box_mesh({1, 1, 1}, {3, 3, 3});
    const QuadratureRule rule = gauss_rule(5);
    const VectorXd u = interpolate(
        mesh, {[](const Point& x) { return x[0]; }, [](const Point&) { return 0.0; },
               [](const Point&) { return 0.0; }});
    const SpMat pid = assemble_penalty(mesh, rule, MatrixField::identity());
    CHECK(u.dot(pid * u) == doctest::Approx(1.0).epsilon(1e-13));

    // eps = I + x e11: div(eps u) = 1 + 2x, so the form is
    // int_0^1 (1+2x)^2 dx = 13/3
    const MatrixField eps = MatrixField::components(
        {ScalarExpr::parse("1 + x"), ScalarExpr::constant(1.0), ScalarExpr::constant(1.0),
         ScalarExpr(), ScalarExpr(), ScalarExpr()});
    const SpMat peps = assemble_penalty(mesh, rule, eps);
    CHECK(u.dot(peps * u) == doctest::Approx(13.0 / 3.0).epsilon(1e-13));
}

TEST_CASE("mass quadratic forms") {
    const Mesh mesh = build_box_mesh({kPi, 1.0, 2.0}, {3, 2, 3});
    const QuadratureRule rule = gauss_rule(3);
    const double vol = kPi * 1.0 * 2.0;

    const SpMat mid = assemble_mass(mesh, rule, MatrixField::identity());
    const VectorXd e1 = interpolate(mesh, kConstE1);
    CHECK(e1.dot(mid * e1) == doctest::Approx(vol).epsilon(1e-13));

    const SpMat mdiag = assemble_mass(mesh, rule, MatrixField::constant(Sym3::diagonal(2, 3, 4)));
    for (int c = 0; c < 3; ++c) {
        VectorXd ec = VectorXd::Zero(3 * mesh.node_count());
        for (int n = 0; n < mesh.node_count(); ++n) ec(3 * n + c) = 1.0;
        CHECK(ec.dot(mdiag * ec) == doctest::Approx((2.0 + c) * vol).epsilon(1e-13));
    }
}

TEST_CASE("reduced mass stays positive definite") {
    const Mesh mesh = build_box_mesh({kPi, kPi, kPi}, {3, 3, 3});
    const QuadratureRule rule = gauss_rule(5);
    const PermittivityField eps{MatrixField::constant(Sym3::diagonal(2, 1, 3))};
    const auto pencil = assemble_pencil(mesh, rule, eps, 1.0);
    Eigen::LLT<MatrixXd> llt{MatrixXd(pencil.M)};
    CHECK(llt.info() == Eigen::Success);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es{MatrixXd(pencil.M)};
    CHECK(es.eigenvalues()(0) > 0.0);
}

TEST_CASE("reduced dimension matches the combinatorial count") {
    for (int n : {2, 3, 4}) {
        const Mesh mesh = build_box_mesh({kPi, kPi, kPi}, {n, n, n});
        const auto map = vector_dof_map(mesh);
        const int nodes = (n + 1) * (n + 1) * (n + 1);
        const int constraints = 12 * (n - 1) * (n - 1) + 36 * (n - 1) + 24;
        CHECK(map.full_dim == 3 * nodes);
        CHECK(map.reduced_dim == 3 * nodes - constraints);

        // direct enumeration
        const auto con = cavspec::geometry::tangential_constraints(mesh);
        int direct = 0;
        for (auto mask : con) direct += (mask & 1) + ((mask >> 1) & 1) + ((mask >> 2) & 1);
        CHECK(constraints == direct);
    }
}

TEST_CASE("pencil scaling identity") {
    // eps = alpha I with tau' = tau/alpha^2 reproduces the identity left
    // matrix exactly; the right matrix scales by alpha
    const Mesh mesh = build_box_mesh({kPi, kPi, kPi}, {3, 3, 3});
    const QuadratureRule rule = gauss_rule(5);
    const double alpha = 2.0, tau = 1.3;
    const PermittivityField id{MatrixField::identity()};
    const PermittivityField aid{MatrixField::constant(Sym3::diagonal(alpha, alpha, alpha))};
    const auto p1 = assemble_pencil(mesh, rule, id, tau);
    const auto p2 = assemble_pencil(mesh, rule, aid, tau / (alpha * alpha));

    const SpMat dl = p2.left() - p1.left();
    double worst = 0.0;
    for (int k = 0; k < dl.outerSize(); ++k)
        for (SpMat::InnerIterator it(dl, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
    CHECK(worst < 1e-12);

    const SpMat dm = p2.M - alpha * p1.M;
    worst = 0.0;
    for (int k = 0; k < dm.outerSize(); ++k)
        for (SpMat::InnerIterator it(dm, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
    CHECK(worst < 1e-12);
}

TEST_CASE("scalar pencil") {
    const Mesh mesh = build_box_mesh({kPi, kPi, kPi}, {4, 4, 4});
    const QuadratureRule rule = gauss_rule(3);
    const PermittivityField id{MatrixField::identity()};
    const auto sp = assemble_scalar_pencil(mesh, rule, id);
    CHECK(sp.dof_map.reduced_dim == 3 * 3 * 3);

    // alpha I scales the stiffness exactly, mass unchanged
    const PermittivityField two{MatrixField::constant(Sym3::diagonal(2, 2, 2))};
    const auto sp2 = assemble_scalar_pencil(mesh, rule, two);
    const SpMat dk = sp2.K - 2.0 * sp.K;
    double worst = 0.0;
    for (int k = 0; k < dk.outerSize(); ++k)
        for (SpMat::InnerIterator it(dk, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
    CHECK(worst < 1e-12);

    // Dirichlet elimination removes the constant mode: K is PD on the
    // reduced space
    Eigen::SelfAdjointEigenSolver<MatrixXd> es{MatrixXd(sp.K)};
    CHECK(es.eigenvalues()(0) > 0.1);
}

TEST_CASE("semi-definiteness and coercivity transfer") {
    const Mesh mesh = build_box_mesh({kPi, kPi, kPi}, {3, 3, 3});
    const QuadratureRule rule = gauss_rule(5);
    const MatrixField eps = MatrixField::components(
        {ScalarExpr::parse("2 + 0.5*sin(x)"), ScalarExpr::parse("1.5"),
         ScalarExpr::parse("1 + 0.2*cos(y)"), ScalarExpr::parse("0.1*z"), ScalarExpr(),
         ScalarExpr()});
    const SpMat k = assemble_curlcurl(mesh, rule);
    const SpMat p = assemble_penalty(mesh, rule, eps);
    const SpMat meps = assemble_mass(mesh, rule, eps);
    const SpMat mid = assemble_mass(mesh, rule, MatrixField::identity());

    const PermittivityField pe{eps};
    const double ceps = cavspec::material::audit_admissibility(pe, mesh, rule).c_eps;
    // 3 * sup-norm bound on the largest matrix entry
    const cavspec::material::SamplingSpec sampling{&mesh, &rule, 4};
    const double sup = cavspec::material::w1inf_norm(eps, sampling);

    std::mt19937 rng(23);
    std::normal_distribution<double> g(0.0, 1.0);
    const int dim = 3 * mesh.node_count();
    for (int trial = 0; trial < 100; ++trial) {
        VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v(i) = g(rng);
        const double kv = v.dot(k * v);
        const double pv = v.dot(p * v);
        const double mv = v.dot(meps * v);
        const double mi = v.dot(mid * v);
        CHECK(kv >= -1e-12 * v.squaredNorm());
        CHECK(pv >= -1e-12 * v.squaredNorm());
        CHECK(mv >= ceps * mi * (1.0 - 1e-10));
        CHECK(mv <= 3.0 * sup * mi * (1.0 + 1e-10));
    }
}

TEST_CASE("curl energy of an interpolated smooth field converges at h^2") {
    // u = (sin y, 0, 0): int |curl u|^2 over the pi-cube = pi^3 / 2
    const double exact = kPi * kPi * kPi / 2.0;
    const QuadratureRule rule = gauss_rule(5);
    double err_prev = 0.0;
    std::vector<double> errs;
    for (int n : {4, 8, 16}) {
        const Mesh mesh = build_box_mesh({kPi, kPi, kPi}, {n, n, n});
        const SpMat k = assemble_curlcurl(mesh, rule);
        const VectorXd u = interpolate(
            mesh, {[](const Point& x) { return std::sin(x[1]); },
                   [](const Point&) { return 0.0; }, [](const Point&) { return 0.0; }});
        errs.push_back(std::abs(u.dot(k * u) - exact));
        (void)err_prev;
    }
    CHECK(errs[0] / errs[1] == doctest::Approx(4.0).epsilon(0.15));
    CHECK(errs[1] / errs[2] == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("coo export format") {
    const Mesh mesh = build_box_mesh({1, 1, 1}, {2, 2, 2});
    const QuadratureRule rule = gauss_rule(3);
    const SpMat k = assemble_curlcurl(mesh, rule);
    std::ostringstream os;
    write_coo(k, os);
    std::istringstream is(os.str());
    long rows, cols, nnz;
    is >> rows >> cols >> nnz;
    CHECK(rows == k.rows());
    CHECK(cols == k.cols());
    CHECK(nnz == k.nonZeros());
    long i, j;
    double value;
    long count = 0;
    while (is >> i >> j >> value) ++count;
    CHECK(count == nnz);
}

TEST_CASE("assembly is bitwise deterministic across worker counts") {
    const Mesh mesh = build_box_mesh({kPi, kPi, kPi}, {6, 6, 6});
    const QuadratureRule rule = gauss_rule(5);
    const MatrixField eps = MatrixField::components(
        {ScalarExpr::parse("1 + 0.25*sin(x)*cos(y)"), ScalarExpr::parse("1.5"),
         ScalarExpr::parse("1 + 0.1*z"), ScalarExpr::parse("0.05*x"), ScalarExpr(), ScalarExpr()});
    cavspec::set_thread_count(1);
    const SpMat m1 = assemble_mass(mesh, rule, eps);
    const SpMat p1 = assemble_penalty(mesh, rule, eps);
    cavspec::set_thread_count(4);
    const SpMat m4 = assemble_mass(mesh, rule, eps);
    const SpMat p4 = assemble_penalty(mesh, rule, eps);
    cavspec::set_thread_count(0);
    // cells merge in index order regardless of the worker count
    CHECK((MatrixXd(m1) - MatrixXd(m4)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((MatrixXd(p1) - MatrixXd(p4)).cwiseAbs().maxCoeff() == 0.0);
}
