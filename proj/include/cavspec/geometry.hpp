#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cavspec::geometry {

using Point = std::array<double, 3>;
using Index3 = std::array<int, 3>;

/// Axis-aligned box (0,a) x (0,b) x (0,c).
struct BoxDomain {
    std::array<double, 3> extent{1.0, 1.0, 1.0};

    double volume() const { return extent[0] * extent[1] * extent[2]; }
};

/// Bitmask of the six box faces a node lies on.  Bit layout: bit 2*d marks
/// the low face of axis d, bit 2*d+1 the high face.
using FaceMask = std::uint8_t;

constexpr FaceMask face_bit(int axis, bool high) {
    return static_cast<FaceMask>(1u << (2 * axis + (high ? 1 : 0)));
}

/// Structured hexahedral partition of a box.  Nodes are ordered
/// lexicographically with the x index fastest; cells likewise.  Boundary
/// membership is decided from integer grid indices at construction, never
/// by floating-point comparison.
class Mesh {
  public:
    Mesh(const BoxDomain& box, const Index3& subdivisions);

    const BoxDomain& box() const { return box_; }
    const Index3& subdivisions() const { return subdiv_; }

    int node_count() const { return static_cast<int>(nodes_.size()); }
    int cell_count() const { return cells_x_ * cells_y_ * cells_z_; }

    const Point& node(int n) const { return nodes_[static_cast<std::size_t>(n)]; }
    const std::vector<Point>& nodes() const { return nodes_; }

    /// Eight node indices of a cell, in the tensor corner order
    /// (i,j,k), (i+1,j,k), (i,j+1,k), (i+1,j+1,k), then the k+1 layer.
    std::array<int, 8> cell_nodes(int cell) const;

    /// Low corner of a cell in physical coordinates.
    Point cell_origin(int cell) const;

    /// Uniform cell edge lengths (hx, hy, hz); identical for all cells.
    const std::array<double, 3>& cell_size() const { return h_; }
    double cell_volume() const { return h_[0] * h_[1] * h_[2]; }

    FaceMask boundary_faces(int node) const {
        return face_masks_[static_cast<std::size_t>(node)];
    }
    bool is_boundary_node(int node) const { return boundary_faces(node) != 0; }

    int node_index(int i, int j, int k) const {
        return i + (subdiv_[0] + 1) * (j + (subdiv_[1] + 1) * k);
    }
    Index3 node_coords(int n) const;

    int cell_index(int i, int j, int k) const { return i + cells_x_ * (j + cells_y_ * k); }

    /// Cell containing a point (clamped to the grid); used to evaluate
    /// per-cell material data at arbitrary sample points.
    int locate_cell(const Point& x) const;

    /// JSON description (extents and subdivisions only); node and cell
    /// arrays are regenerated on load, not stored.
    std::string to_json() const;
    static Mesh from_json(const std::string& text);

  private:
    BoxDomain box_;
    Index3 subdiv_{1, 1, 1};
    int cells_x_ = 1, cells_y_ = 1, cells_z_ = 1;
    std::array<double, 3> h_{1.0, 1.0, 1.0};
    std::vector<Point> nodes_;
    std::vector<FaceMask> face_masks_;
};

Mesh build_box_mesh(const std::array<double, 3>& extent, const Index3& subdivisions);

/// Per-node set of vector components killed by the tangential trace
/// condition.  Bit c set means component c is constrained.  On a face with
/// normal along axis k the two tangential components are constrained; edges
/// and corners take the union over their faces.
std::vector<std::uint8_t> tangential_constraints(const Mesh& mesh);

/// Tensorized Gauss rule on the reference cell [-1,1]^3.
struct QuadratureRule {
    int degree = 0; // polynomial degree integrated exactly (per axis)
    std::vector<Point> points;
    std::vector<double> weights;

    int size() const { return static_cast<int>(points.size()); }
    int points_per_axis() const;
};

QuadratureRule gauss_rule(int degree);

} // namespace cavspec::geometry
