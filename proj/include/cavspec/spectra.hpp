#pragma once

#include "cavspec/eigensolve.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cavspec::spectra {

using assembly::OperatorPencil;
using assembly::SpMat;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using geometry::Mesh;
using geometry::QuadratureRule;
using material::PermittivityField;
using material::PerturbationDirection;

struct SpectrumTols {
    double solver_tol = 1e-9;
    double cluster_tol = 1e-3; // relative gap grouping eigenvalues
    double r_max = 0.1;        // divergence-residual gate for Maxwell labels
    double match_tol = 0.02;   // relative match |sigma - tau rho|
    double gap_min = 1e-3;     // relative gap certifying a successful split
};

enum class Family { Maxwell, Gradient, Ambiguous };

const char* family_name(Family f);

struct SpectrumEntry {
    double sigma = 0.0;
    double div_residual = 0.0; // ||div(eps u)|| / ||u||_eps
    Family label = Family::Ambiguous;
    int cluster = -1;
};

struct Spectrum {
    std::vector<SpectrumEntry> entries;
    MatrixXd vectors; // M_eps-orthonormal coefficient columns
    double tau = 1.0;
    std::vector<std::vector<int>> clusters;
    std::vector<double> dirichlet; // rho values used for classification
    double gram_error = 0.0;
    VectorXd residuals;

    int size() const { return static_cast<int>(entries.size()); }
    double sigma(int i) const { return entries[static_cast<std::size_t>(i)].sigma; }
    /// Indices of maxwell-labeled entries, in spectral order.
    std::vector<int> maxwell_indices() const;
    bool has_ambiguous() const;
};

struct CoverageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NeedsTauShiftError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PreconditionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrackingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// k smallest penalized eigenpairs with residual metadata, cluster structure
/// and family labels.
Spectrum compute_spectrum(const Mesh& mesh, const QuadratureRule& rule,
                          const PermittivityField& eps, double tau, int k,
                          const SpectrumTols& tols = {});

/// Label entries against the Dirichlet list: gradient when sigma matches
/// tau*rho and the divergence residual is large, maxwell when the residual
/// is small and no tau*rho matches; ambiguous when both or neither fire.
void classify(Spectrum& spectrum, const std::vector<double>& dirichlet_values, double tau,
              const SpectrumTols& tols);

/// Re-runs with tau' = 0.7 tau and re-matches: values that persist are
/// Maxwell (tau-independent family), values that moved by the tau ratio are
/// gradient.  Returns the relabeled spectrum.
Spectrum resolve_with_tau_shift(Spectrum spectrum, const Mesh& mesh, const QuadratureRule& rule,
                                const PermittivityField& eps, int k, const SpectrumTols& tols);

/// compute_spectrum followed by tau-shift disambiguation when needed.
Spectrum maxwell_spectrum(const Mesh& mesh, const QuadratureRule& rule,
                          const PermittivityField& eps, double tau, int k,
                          const SpectrumTols& tols = {});

/// The maxwell-labeled subsequence; throws NeedsTauShiftError when ambiguous
/// entries remain in the window.
std::vector<double> maxwell_eigenvalues(const Spectrum& spectrum);

/// 5x the median divergence residual of the three lowest modes at eps = I;
/// the per-mesh calibration of the Maxwell residual gate.
double calibrate_r_max(const Mesh& mesh, const QuadratureRule& rule, double solver_tol = 1e-10);

/// Elementary symmetric function of degree s of the given values.
double symmetric_function(const std::vector<double>& values, int s);

/// One block of a cluster partition: |indices| eigenvalues sharing `value`,
/// with eta_trace = sum over the block of v^T M[eta] v.
struct ClusterBlock {
    std::vector<int> indices;
    double value = 0.0;
    double eta_trace = 0.0;
};

/// d Lambda_{F,s}[eta] = -sum_k c_k * eta_trace_k with the combinatorial
/// coefficients of the symmetric-function differential.
double symmetric_function_derivative(const std::vector<ClusterBlock>& blocks, int s);

/// Coefficients c_k alone (exposed for the trace-identity checks).
std::vector<double> symmetric_function_coefficients(const std::vector<ClusterBlock>& blocks,
                                                    int s);

/// Gram matrix V^T M[eta] V of a cluster basis against the eta-weighted
/// mass; checks that the basis is M_eps-orthonormal first.
MatrixXd eta_gram(const Mesh& mesh, const QuadratureRule& rule, const OperatorPencil& pencil,
                  const PerturbationDirection& eta, const MatrixXd& basis,
                  double ortho_tol = 1e-8);

/// Rellich-Nagy matrix (-lambda * int eta E_i . E_j) and its sorted
/// eigenvalues, the one-sided slopes of the splitting branches.
MatrixXd rellich_nagy_matrix(double lambda, const MatrixXd& gram);
VectorXd branch_slopes(const MatrixXd& rn_matrix);

/// Exact first-order perturbation of the discrete pencil:
/// sigma'[eta] = u^T (tau P'[eta] - sigma M'[eta]) u / (u^T M u).
double discrete_eigenvalue_derivative(const Mesh& mesh, const QuadratureRule& rule,
                                      const OperatorPencil& pencil,
                                      const PermittivityField& eps,
                                      const PerturbationDirection& eta, double sigma,
                                      const VectorXd& u);

/// Linear permittivity path eps + t * eta with constant derivative.
struct LinearPath {
    PermittivityField base;
    PerturbationDirection direction;

    PermittivityField at(double t) const { return material::perturbed(base, t, direction); }
};

struct BranchCurves {
    std::vector<double> t;
    MatrixXd values;          // one row per branch, one column per grid point
    VectorXd slopes_at_base;  // initial slopes used as predictors
};

/// Tracks the eigenvalue branches inside [window_lo, window_hi] (window
/// evaluated at t = 0) across the t grid.  The grid must contain 0; at the
/// base point clusters use Rellich-Nagy slopes as predictors, elsewhere
/// matching is order-preserving nearest-with-slope-prediction.
BranchCurves track_branches(const LinearPath& path, const std::vector<double>& tgrid,
                            const Mesh& mesh, const QuadratureRule& rule, double tau,
                            double window_lo, double window_hi, const SpectrumTols& tols = {});

struct SplitResult {
    PerturbationDirection eta;
    double t = 0.0;
    VectorXd sub_values;  // the m perturbed eigenvalues
    double min_gap = 0.0; // smallest pairwise gap achieved
    int candidate = -1;   // which dictionary entry succeeded
    VectorXd predicted_slopes;
};

struct NoSplitFoundError : std::runtime_error {
    NoSplitFoundError(std::string msg, double best_gap, int best_candidate)
        : std::runtime_error(std::move(msg)), best_gap(best_gap), best_candidate(best_candidate) {}
    double best_gap;
    int best_candidate;
};

/// Perturbs eps along a deterministic dictionary of diagonal bump directions
/// until the cluster's m eigenvalues are pairwise separated by more than
/// gap_min * lambda without overlapping their neighbors.  Steps stay below T.
SplitResult split_cluster(const Mesh& mesh, const QuadratureRule& rule,
                          const PermittivityField& eps, double tau, const Spectrum& spectrum,
                          int cluster_id, double T, const SpectrumTols& tols = {});

struct GenericityStep {
    int cluster_size = 0;
    double lambda = 0.0;
    double t = 0.0;
    int candidate = -1;
};

struct GenericityResult {
    PermittivityField eps;
    bool success = false;
    int simple_up_to = 0;        // first n Maxwell eigenvalues certified simple
    double distance_moved = 0.0; // accumulated W^{1,inf} perturbation
    std::vector<GenericityStep> steps;
    std::vector<double> maxwell_values;
    std::vector<double> gaps; // consecutive relative gaps certifying simplicity
};

/// Iterated splitting: makes the first n Maxwell eigenvalues simple while
/// moving at most delta in W^{1,inf} (geometric step budget delta / 2^k).
GenericityResult genericity_search(const Mesh& mesh, const QuadratureRule& rule,
                                   const PermittivityField& eps, int n, double delta, int budget,
                                   double tau, const SpectrumTols& tols = {});

/// |sigma_j[eps1] - sigma_j[eps2]| / ||eps1 - eps2||_{W^{1,inf}}; j is 1-based.
double lipschitz_ratio(const Mesh& mesh, const QuadratureRule& rule,
                       const PermittivityField& eps1, const PermittivityField& eps2, int j,
                       double tau, const SpectrumTols& tols = {});

} // namespace cavspec::spectra
