#pragma once

#include "cavspec/expr.hpp"
#include "cavspec/geometry.hpp"

#include <array>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cavspec::material {

using geometry::Mesh;
using geometry::Point;
using geometry::QuadratureRule;

/// Symmetric 3x3 matrix, packed storage (xx, yy, zz, yz, xz, xy).
/// Symmetry holds exactly by construction: (i,j) and (j,i) share a slot.
struct Sym3 {
    std::array<double, 6> a{0, 0, 0, 0, 0, 0};

    static int pack_index(int i, int j) {
        static constexpr int table[3][3] = {{0, 5, 4}, {5, 1, 3}, {4, 3, 2}};
        return table[i][j];
    }

    double operator()(int i, int j) const { return a[static_cast<std::size_t>(pack_index(i, j))]; }
    double& at(int i, int j) { return a[static_cast<std::size_t>(pack_index(i, j))]; }

    static Sym3 identity() { return Sym3{{1, 1, 1, 0, 0, 0}}; }
    static Sym3 diagonal(double d0, double d1, double d2) { return Sym3{{d0, d1, d2, 0, 0, 0}}; }

    Sym3 operator+(const Sym3& o) const;
    Sym3 operator-(const Sym3& o) const;
    Sym3 scaled(double s) const;

    std::array<double, 3> apply(const std::array<double, 3>& v) const;
    double max_abs_entry() const;
};

/// Eigenvalues of a symmetric 3x3 matrix, ascending.  Closed-form
/// trigonometric solution of the characteristic cubic followed by a couple
/// of Newton polish steps; accurate to ~1e-12 relative to the matrix scale.
std::array<double, 3> sym3_eigenvalues(const Sym3& m);

/// Field value with spatial jacobian: jac[k](i,j) = d eps_ij / d x_k.
struct FieldValue {
    Sym3 value;
    std::array<Sym3, 3> jac;
};

enum class FieldKind { Constant, ScalarIsotropic, AnalyticMatrix, PerCellConstant, Combination };

namespace detail {
struct FieldImpl;
}

/// Immutable symmetric matrix field on the box.  Cheap to copy and safe to
/// share across threads; evaluation is reentrant.
class MatrixField {
  public:
    MatrixField(); // zero field

    static MatrixField constant(const Sym3& value);
    static MatrixField identity();
    static MatrixField isotropic(const expr::ScalarExpr& e);
    /// Upper-triangle entries in the order (11, 22, 33, 23, 13, 12).
    static MatrixField components(const std::array<expr::ScalarExpr, 6>& comps);
    static MatrixField per_cell(const Mesh& mesh, std::vector<Sym3> values);
    /// base + sum_i coefs[i] * terms[i]
    static MatrixField combination(MatrixField base,
                                   std::vector<std::pair<double, MatrixField>> terms);

    /// Evaluate at a point.  `cell` disambiguates per-cell-constant data;
    /// pass -1 to locate the cell from the coordinates.
    FieldValue eval(const Point& x, int cell = -1) const;
    Sym3 value(const Point& x, int cell = -1) const;

    /// False for per-cell-constant data, whose in-cell jacobian is zero and
    /// whose distributional derivative is not representable here.
    bool has_jacobian() const;
    FieldKind kind() const;
    std::string kind_name() const;
    /// Structural description used for report provenance.
    std::string to_json() const;

  private:
    explicit MatrixField(std::shared_ptr<const detail::FieldImpl> impl);
    std::shared_ptr<const detail::FieldImpl> impl_;
};

/// k-th entry is the divergence of the k-th column of the field at x.
std::array<double, 3> matrix_divergence(const MatrixField& field, const Point& x, int cell = -1);

struct PermittivityField {
    MatrixField field;

    FieldValue eval(const Point& x, int cell = -1) const { return field.eval(x, cell); }
    bool has_jacobian() const { return field.has_jacobian(); }
};

struct PerturbationDirection {
    MatrixField field;
    double norm_estimate = 0.0;

    FieldValue eval(const Point& x, int cell = -1) const { return field.eval(x, cell); }
};

PermittivityField perturbed(const PermittivityField& base, double t,
                            const PerturbationDirection& dir);

struct CoercivityEstimate {
    double c_eps = 0.0;
    Point argmin_point{0, 0, 0};
};

struct NotAdmissibleError : std::runtime_error {
    NotAdmissibleError(const Point& where, double min_eig);
    Point where;
    double min_eig;
};

/// Sample set for sup-norm and coercivity estimation: all quadrature points
/// plus a uniform oversampling grid (default 4x the quadrature density per
/// axis).  The gap between these discrete estimates and the true essential
/// sup is acknowledged; see audit/report notes.
struct SamplingSpec {
    const Mesh* mesh = nullptr;
    const QuadratureRule* rule = nullptr;
    int oversample = 4;
};

/// Minimum over the sample set of the smallest eigenvalue of eps(x).
/// Throws NotAdmissibleError (with the witness point) if it is <= 0.
CoercivityEstimate audit_admissibility(const PermittivityField& eps, const Mesh& mesh,
                                       const QuadratureRule& rule, int oversample = 4);

/// max over samples and entries (i,j) of max(|d_ij|, max_k |d d_ij / d x_k|)
/// for d = f1 - f2.  Exact (sample-free) when both fields fold to constants.
double w1inf_distance(const MatrixField& f1, const MatrixField& f2, const SamplingSpec& sampling);
double w1inf_norm(const MatrixField& f, const SamplingSpec& sampling);

/// Direction with single nonzero entry (h,h) = bump / ||bump||_{W^{1,inf}}.
/// `h` is a 1-based axis index.  The bump must vanish near the boundary and
/// not be identically zero.
PerturbationDirection make_splitting_direction(int h, const expr::ScalarExpr& bump,
                                               const SamplingSpec& sampling);

/// Diagonal direction diag(b1, b2, b3) normalized to unit W^{1,inf} norm;
/// entries may differ, which is what makes it split clusters whose modes are
/// polarized along distinct axes.
PerturbationDirection make_diagonal_direction(const std::array<expr::ScalarExpr, 3>& bumps,
                                              const SamplingSpec& sampling);

/// Constant symmetric direction scaled to the given W^{1,inf} norm.
PerturbationDirection make_constant_direction(const Sym3& matrix, double target_norm);

} // namespace cavspec::material
