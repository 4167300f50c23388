#pragma once

#include "cavspec/geometry.hpp"
#include "cavspec/material.hpp"

#include <Eigen/SparseCore>

#include <iosfwd>
#include <vector>

namespace cavspec::assembly {

using geometry::Mesh;
using geometry::QuadratureRule;
using material::MatrixField;
using material::PermittivityField;
using material::PerturbationDirection;

using SpMat = Eigen::SparseMatrix<double>;

/// Map from full (node, component) indices to reduced indices after
/// constraint elimination; -1 marks an eliminated degree of freedom.
struct DofMap {
    std::vector<int> reduced; // size = full_dim
    int full_dim = 0;
    int reduced_dim = 0;

    int operator()(int full_index) const { return reduced[static_cast<std::size_t>(full_index)]; }
};

/// Vector-valued trilinear space with tangential components eliminated on
/// the boundary.  Full index = 3*node + component.
DofMap vector_dof_map(const Mesh& mesh);

/// Scalar trilinear space with homogeneous Dirichlet boundary.
DofMap scalar_dof_map(const Mesh& mesh);

/// Row/column selection of the constrained-out entries.
SpMat reduce(const SpMat& full, const DofMap& map);

// Unconstrained (full-space) assemblies.  Entries are exact Gauss sums of
// the respective bilinear forms over trilinear vector shape functions.
SpMat assemble_curlcurl(const Mesh& mesh, const QuadratureRule& rule);
SpMat assemble_mass(const Mesh& mesh, const QuadratureRule& rule, const MatrixField& weight);
SpMat assemble_penalty(const Mesh& mesh, const QuadratureRule& rule, const MatrixField& eps);
/// Symmetrized bilinear-in-(eps,eta) penalty derivative:
/// entry (u,v) = int div(eps u) div(eta v) + div(eta u) div(eps v).
SpMat assemble_penalty_cross(const Mesh& mesh, const QuadratureRule& rule, const MatrixField& eps,
                             const MatrixField& eta);

/// Assembled symmetric pencil of the penalized problem, reduced by the
/// tangential constraints.  The eigenproblem solved downstream is
/// (K + tau P) u = sigma M u; adding M to the left side realizes the
/// shifted operator whose eigenvalues are sigma + 1.
struct OperatorPencil {
    SpMat K; // curl-curl
    SpMat P; // eps-divergence penalty, tau NOT included
    SpMat M; // eps-weighted mass
    double tau = 1.0;
    DofMap dof_map;

    SpMat left() const { return K + tau * P; } // A = K + tau P
};

OperatorPencil assemble_pencil(const Mesh& mesh, const QuadratureRule& rule,
                               const PermittivityField& eps, double tau);

/// Dirichlet comparison pencil: stiffness int eps grad f . grad g and mass
/// int f g on the scalar trilinear space.
struct ScalarPencil {
    SpMat K;
    SpMat M;
    DofMap dof_map;
};

ScalarPencil assemble_scalar_pencil(const Mesh& mesh, const QuadratureRule& rule,
                                    const PermittivityField& eps);

/// Coordinate text format: header "rows cols nnz", then one "i j value" line
/// per stored entry (0-based indices, 17 significant digits).
void write_coo(const SpMat& m, std::ostream& os);

} // namespace cavspec::assembly
