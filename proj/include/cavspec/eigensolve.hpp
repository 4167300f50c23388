#pragma once

#include "cavspec/assembly.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace cavspec::eigensolve {

using assembly::SpMat;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// k smallest eigenpairs of A u = sigma M u with M-orthonormal vectors.
struct EigenSolution {
    VectorXd values;    // nondecreasing
    MatrixXd vectors;   // columns, V^T M V = I
    VectorXd residuals; // ||(A - sigma M) u||_2 / ||A u||_2 per pair
    double gram_error = 0.0; // ||V^T M V - I||_max
};

struct DefinitenessError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
    ConvergenceError(std::string msg, VectorXd best_residuals)
        : std::runtime_error(std::move(msg)), best_residuals(std::move(best_residuals)) {}
    VectorXd best_residuals;
};

struct SolveOptions {
    enum class Mode { Auto, Dense, Iterative };
    Mode mode = Mode::Auto;
    double tol = 1e-9;
    int block_size = 4;       // fixed Lanczos block width
    std::uint64_t seed = 0x5eed5eed5eed5eedULL;
    int max_basis = 0;        // 0: chosen from k and n
};

/// Deterministic solver: block shift-invert Lanczos on (A + M)^{-1} M in the
/// M inner product, with a dense reduction fallback for small problems.
/// Identical inputs give identical outputs; worker counts do not enter.
EigenSolution solve_gsym(const SpMat& A, const SpMat& M, int k, const SolveOptions& opts = {});
EigenSolution solve_gsym(const SpMat& A, const SpMat& M, int k, double tol);

/// Spectral parameter maps: mu = (sigma + 1)^{-1} on sigma >= 0, and back.
double sigma_to_mu(double sigma);
double mu_to_sigma(double mu);

/// k smallest Dirichlet eigenvalues of -div(eps grad f) = rho f on the box.
EigenSolution solve_dirichlet_scalar(const geometry::Mesh& mesh,
                                     const geometry::QuadratureRule& rule,
                                     const material::PermittivityField& eps, int k,
                                     double tol = 1e-10);

} // namespace cavspec::eigensolve
