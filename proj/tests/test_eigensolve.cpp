#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cavspec/eigensolve.hpp"

#include "support/analytic_modes.hpp"
#include "support/dense_oracle.hpp"

#include <cmath>
#include <random>

using namespace cavspec::eigensolve;
using cavspec::geometry::build_box_mesh;
using cavspec::geometry::gauss_rule;
using cavspec::geometry::Mesh;
using cavspec::geometry::QuadratureRule;
using cavspec::material::MatrixField;
using cavspec::material::PermittivityField;
using cavspec::material::Sym3;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr double kPi = 3.14159265358979323846;

SpMat to_sparse(const MatrixXd& d) {
    SpMat s(d.rows(), d.cols());
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index j = 0; j < d.cols(); ++j)
        for (Eigen::Index i = 0; i < d.rows(); ++i)
            if (d(i, j) != 0.0) trip.emplace_back(i, j, d(i, j));
    s.setFromTriplets(trip.begin(), trip.end());
    return s;
}

// random SPD pencil with a controlled spread of eigenvalues
std::pair<MatrixXd, MatrixXd> random_pencil(int n, std::mt19937& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixXd a(n, n), b(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            a(i, j) = g(rng);
            b(i, j) = g(rng);
        }
    MatrixXd spd_a = a * a.transpose() + 0.5 * MatrixXd::Identity(n, n);
    MatrixXd spd_b = b * b.transpose() + static_cast<double>(n) * MatrixXd::Identity(n, n);
    return {spd_a, spd_b};
}
} // namespace

TEST_CASE("oracle sanity") {
    MatrixXd a(2, 2);
    a << 2, 1, 1, 2; // eigenvalues 1, 3
    const auto r = oracle::jacobi_eigensym(a);
    CHECK(r.values(0) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(r.values(1) == doctest::Approx(3.0).epsilon(1e-13));
}

TEST_CASE("diagonal pencil") {
    MatrixXd a = MatrixXd::Zero(2, 2);
    a(0, 0) = 1;
    a(1, 1) = 2;
    const auto sol = solve_gsym(to_sparse(a), to_sparse(MatrixXd::Identity(2, 2)), 2, 1e-12);
    CHECK(sol.values(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sol.values(1) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(sol.gram_error < 1e-12);
}

TEST_CASE("A equal to M gives unit spectrum") {
    std::mt19937 rng(1);
    const auto [a, b] = random_pencil(20, rng);
    (void)a;
    const SpMat m = to_sparse(b);
    const auto sol = solve_gsym(m, m, 5, 1e-12);
    for (int i = 0; i < 5; ++i) CHECK(sol.values(i) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("50 random pencils match the dense brute-force oracle") {
    std::mt19937 rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const auto [a, b] = random_pencil(50, rng);
        const VectorXd truth = oracle::pencil_eigenvalues(a, b);
        const int k = 10;
        const auto sol = solve_gsym(to_sparse(a), to_sparse(b), k, 1e-10);
        for (int i = 0; i < k; ++i) CHECK(std::abs(sol.values(i) - truth(i)) < 1e-8);
        CHECK(sol.gram_error <= 1e-10);
    }
}

TEST_CASE("forced iterative path matches the oracle too") {
    std::mt19937 rng(43);
    SolveOptions opts;
    opts.mode = SolveOptions::Mode::Iterative;
    opts.tol = 1e-11;
    for (int trial = 0; trial < 10; ++trial) {
        const auto [a, b] = random_pencil(60, rng);
        const VectorXd truth = oracle::pencil_eigenvalues(a, b);
        const auto sol = solve_gsym(to_sparse(a), to_sparse(b), 6, opts);
        for (int i = 0; i < 6; ++i) CHECK(std::abs(sol.values(i) - truth(i)) < 1e-8);
        CHECK(sol.gram_error <= 1e-10);
        CHECK(sol.residuals.maxCoeff() <= opts.tol);
    }
}

TEST_CASE("shift consistency") {
    // eigenvalues of (A + M, M) are those of (A, M) plus one
    const Mesh mesh = build_box_mesh({kPi, kPi, kPi}, {3, 3, 3});
    const QuadratureRule rule = gauss_rule(3);
    const PermittivityField id{MatrixField::identity()};
    const auto pencil = cavspec::assembly::assemble_pencil(mesh, rule, id, 1.0);
    const SpMat a = pencil.left();
    const SpMat shifted = a + pencil.M;
    const auto s0 = solve_gsym(a, pencil.M, 6, 1e-11);
    const auto s1 = solve_gsym(shifted, pencil.M, 6, 1e-11);
    for (int i = 0; i < 6; ++i)
        CHECK(std::abs(s1.values(i) - (s0.values(i) + 1.0)) < 1e-10);
}

TEST_CASE("eigenvalue monotonicity under an extra constraint") {
    const Mesh mesh = build_box_mesh({kPi, kPi, kPi}, {2, 2, 2});
    const QuadratureRule rule = gauss_rule(3);
    const PermittivityField id{MatrixField::identity()};
    const auto pencil = cavspec::assembly::assemble_pencil(mesh, rule, id, 1.0);
    const int n = pencil.dof_map.reduced_dim;
    const auto base = oracle::pencil_eigenvalues(MatrixXd(pencil.left()), MatrixXd(pencil.M));
    // drop the last dof: Cauchy interlacing forbids any eigenvalue decrease
    const MatrixXd a2 = MatrixXd(pencil.left()).topLeftCorner(n - 1, n - 1);
    const MatrixXd m2 = MatrixXd(pencil.M).topLeftCorner(n - 1, n - 1);
    const auto constrained = oracle::pencil_eigenvalues(a2, m2);
    for (int j = 0; j < n - 1; ++j) CHECK(constrained(j) >= base(j) - 1e-12);
}

TEST_CASE("determinism") {
    std::mt19937 rng(7);
    const auto [a, b] = random_pencil(80, rng);
    const SpMat as = to_sparse(a), bs = to_sparse(b);
    SolveOptions opts;
    opts.mode = SolveOptions::Mode::Iterative;
    const auto s1 = solve_gsym(as, bs, 5, opts);
    const auto s2 = solve_gsym(as, bs, 5, opts);
    for (int i = 0; i < 5; ++i) {
        CHECK(s1.values(i) == s2.values(i)); // bitwise
        CHECK((s1.vectors.col(i) - s2.vectors.col(i)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("sigma mu conversions") {
    CHECK(sigma_to_mu(0.0) == 1.0);
    CHECK(sigma_to_mu(1.0) == 0.5);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    for (int i = 0; i < 100; ++i) {
        const double sigma = u(rng);
        CHECK(mu_to_sigma(sigma_to_mu(sigma)) == doctest::Approx(sigma).epsilon(1e-15));
    }
    CHECK_THROWS_AS(mu_to_sigma(0.0), std::invalid_argument);
    CHECK_THROWS_AS(mu_to_sigma(1.5), std::invalid_argument);
    CHECK_THROWS_AS(sigma_to_mu(-1.0), std::invalid_argument);
}

TEST_CASE("dirichlet scalar eigenvalues on the cube") {
    const Mesh mesh = build_box_mesh({kPi, kPi, kPi}, {8, 8, 8});
    const QuadratureRule rule = gauss_rule(5);
    const PermittivityField id{MatrixField::identity()};
    const auto sol = solve_dirichlet_scalar(mesh, rule, id, 4, 1e-10);
    CHECK(sol.values(0) > 0.0);
    CHECK(sol.values(0) == doctest::Approx(3.0).epsilon(0.02));
    // the (2,1,1) modes carry a k^4-weighted consistency error, ~4% at this h
    for (int i = 1; i < 4; ++i) CHECK(sol.values(i) == doctest::Approx(6.0).epsilon(0.05));

    // eps = 2I doubles every discrete eigenvalue exactly
    const PermittivityField two{MatrixField::constant(Sym3::diagonal(2, 2, 2))};
    const auto sol2 = solve_dirichlet_scalar(mesh, rule, two, 4, 1e-10);
    for (int i = 0; i < 4; ++i)
        CHECK(sol2.values(i) == doctest::Approx(2.0 * sol.values(i)).epsilon(1e-10));
}

TEST_CASE("error paths") {
    MatrixXd a = MatrixXd::Identity(4, 4);
    MatrixXd m = MatrixXd::Zero(4, 4); // not SPD
    CHECK_THROWS_AS(solve_gsym(to_sparse(a), to_sparse(m), 2, 1e-10), DefinitenessError);
    CHECK_THROWS_AS(solve_gsym(to_sparse(a), to_sparse(a), 9, 1e-10), std::invalid_argument);
    CHECK_THROWS_AS(solve_gsym(to_sparse(a), to_sparse(MatrixXd::Identity(3, 3)), 2, 1e-10),
                    std::invalid_argument);
}
