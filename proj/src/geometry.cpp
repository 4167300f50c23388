#include "cavspec/geometry.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cavspec::geometry {

Mesh::Mesh(const BoxDomain& box, const Index3& subdivisions) : box_(box), subdiv_(subdivisions) {
    for (int d = 0; d < 3; ++d) {
        if (!(box_.extent[static_cast<std::size_t>(d)] > 0.0))
            throw std::invalid_argument("box extent must be strictly positive");
        if (subdiv_[static_cast<std::size_t>(d)] < 1)
            throw std::invalid_argument("mesh subdivisions must be at least 1");
    }
    cells_x_ = subdiv_[0];
    cells_y_ = subdiv_[1];
    cells_z_ = subdiv_[2];
    for (int d = 0; d < 3; ++d)
        h_[static_cast<std::size_t>(d)] =
            box_.extent[static_cast<std::size_t>(d)] / subdiv_[static_cast<std::size_t>(d)];

    const int nx = subdiv_[0], ny = subdiv_[1], nz = subdiv_[2];
    nodes_.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1) * (nz + 1)));
    face_masks_.reserve(nodes_.capacity());
    for (int k = 0; k <= nz; ++k)
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i <= nx; ++i) {
                nodes_.push_back(Point{i * h_[0], j * h_[1], k * h_[2]});
                FaceMask m = 0;
                if (i == 0) m |= face_bit(0, false);
                if (i == nx) m |= face_bit(0, true);
                if (j == 0) m |= face_bit(1, false);
                if (j == ny) m |= face_bit(1, true);
                if (k == 0) m |= face_bit(2, false);
                if (k == nz) m |= face_bit(2, true);
                face_masks_.push_back(m);
            }
}

std::array<int, 8> Mesh::cell_nodes(int cell) const {
    const int i = cell % cells_x_;
    const int j = (cell / cells_x_) % cells_y_;
    const int k = cell / (cells_x_ * cells_y_);
    return {node_index(i, j, k),         node_index(i + 1, j, k),
            node_index(i, j + 1, k),     node_index(i + 1, j + 1, k),
            node_index(i, j, k + 1),     node_index(i + 1, j, k + 1),
            node_index(i, j + 1, k + 1), node_index(i + 1, j + 1, k + 1)};
}

Point Mesh::cell_origin(int cell) const {
    const int i = cell % cells_x_;
    const int j = (cell / cells_x_) % cells_y_;
    const int k = cell / (cells_x_ * cells_y_);
    return {i * h_[0], j * h_[1], k * h_[2]};
}

Index3 Mesh::node_coords(int n) const {
    const int nx = subdiv_[0] + 1, ny = subdiv_[1] + 1;
    return {n % nx, (n / nx) % ny, n / (nx * ny)};
}

int Mesh::locate_cell(const Point& x) const {
    Index3 c;
    for (int d = 0; d < 3; ++d) {
        const auto sd = static_cast<std::size_t>(d);
        int i = static_cast<int>(std::floor(x[sd] / h_[sd]));
        c[sd] = std::clamp(i, 0, subdiv_[sd] - 1);
    }
    return cell_index(c[0], c[1], c[2]);
}

std::string Mesh::to_json() const {
    nlohmann::ordered_json j;
    j["extent"] = box_.extent;
    j["subdivisions"] = subdiv_;
    return j.dump();
}

Mesh Mesh::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    std::array<double, 3> extent = j.at("extent");
    Index3 subdiv = j.at("subdivisions");
    return Mesh(BoxDomain{extent}, subdiv);
}

Mesh build_box_mesh(const std::array<double, 3>& extent, const Index3& subdivisions) {
    return Mesh(BoxDomain{extent}, subdivisions);
}

std::vector<std::uint8_t> tangential_constraints(const Mesh& mesh) {
    std::vector<std::uint8_t> constrained(static_cast<std::size_t>(mesh.node_count()), 0);
    for (int n = 0; n < mesh.node_count(); ++n) {
        const FaceMask faces = mesh.boundary_faces(n);
        std::uint8_t comps = 0;
        for (int axis = 0; axis < 3; ++axis) {
            if (faces & (face_bit(axis, false) | face_bit(axis, true))) {
                // normal along `axis`: the other two components are tangential
                comps |= static_cast<std::uint8_t>(0x7u & ~(1u << axis));
            }
        }
        constrained[static_cast<std::size_t>(n)] = comps;
    }
    return constrained;
}

namespace {

// Gauss-Legendre nodes on [-1,1] by Newton iteration on P_n; deterministic
// and accurate to machine precision.
void gauss_points_1d(int n, std::vector<double>& xs, std::vector<double>& ws) {
    xs.assign(static_cast<std::size_t>(n), 0.0);
    ws.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            if (n == 1) p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            const double pn = (n == 1) ? x : p1;
            const double pn1 = (n == 1) ? 1.0 : p0;
            dp = n * (x * pn - pn1) / (x * x - 1.0);
            const double dx = pn / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        xs[static_cast<std::size_t>(i)] = x;
        ws[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // symmetrize: exact +/- pairing removes the last rounding asymmetry
    for (int i = 0; i < n / 2; ++i) {
        const std::size_t a = static_cast<std::size_t>(i);
        const std::size_t b = static_cast<std::size_t>(n - 1 - i);
        const double m = 0.5 * (xs[a] - xs[b]);
        xs[a] = m;
        xs[b] = -m;
        const double w = 0.5 * (ws[a] + ws[b]);
        ws[a] = ws[b] = w;
    }
    if (n % 2 == 1) xs[static_cast<std::size_t>(n / 2)] = 0.0;
}

} // namespace

int QuadratureRule::points_per_axis() const {
    return (degree + 2) / 2;
}

QuadratureRule gauss_rule(int degree) {
    if (degree < 1 || degree > 13)
        throw std::invalid_argument("gauss_rule: degree must be in [1, 13]");
    const int n = (degree + 2) / 2; // n-point Gauss is exact to degree 2n-1
    std::vector<double> xs, ws;
    gauss_points_1d(n, xs, ws);

    QuadratureRule rule;
    rule.degree = 2 * n - 1;
    rule.points.reserve(static_cast<std::size_t>(n * n * n));
    rule.weights.reserve(rule.points.capacity());
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                rule.points.push_back(Point{xs[static_cast<std::size_t>(i)],
                                            xs[static_cast<std::size_t>(j)],
                                            xs[static_cast<std::size_t>(k)]});
                rule.weights.push_back(ws[static_cast<std::size_t>(i)] *
                                       ws[static_cast<std::size_t>(j)] *
                                       ws[static_cast<std::size_t>(k)]);
            }
    return rule;
}

} // namespace cavspec::geometry
