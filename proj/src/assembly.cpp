#include "cavspec/assembly.hpp"

#include "cavspec/parallel.hpp"

#include <array>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace cavspec::assembly {

namespace {

using geometry::Point;

// Shape data at one quadrature point, in physical coordinates.  The grid is
// uniform, so this is identical for every cell.
struct QuadPointData {
    double w = 0.0; // quadrature weight times |det J|
    std::array<double, 8> n{};
    std::array<std::array<double, 3>, 8> g{};
    Point offset{}; // physical offset of the point from the cell origin
};

std::vector<QuadPointData> shape_data(const Mesh& mesh, const QuadratureRule& rule) {
    const auto h = mesh.cell_size();
    const double detj = h[0] * h[1] * h[2] / 8.0;
    // corner signs in the tensor node order of Mesh::cell_nodes
    static constexpr int sign[8][3] = {{-1, -1, -1}, {1, -1, -1}, {-1, 1, -1}, {1, 1, -1},
                                       {-1, -1, 1},  {1, -1, 1},  {-1, 1, 1},  {1, 1, 1}};
    std::vector<QuadPointData> out(static_cast<std::size_t>(rule.size()));
    for (int q = 0; q < rule.size(); ++q) {
        auto& d = out[static_cast<std::size_t>(q)];
        const Point& r = rule.points[static_cast<std::size_t>(q)];
        d.w = rule.weights[static_cast<std::size_t>(q)] * detj;
        for (int dax = 0; dax < 3; ++dax)
            d.offset[static_cast<std::size_t>(dax)] =
                0.5 * (r[static_cast<std::size_t>(dax)] + 1.0) * h[static_cast<std::size_t>(dax)];
        for (int a = 0; a < 8; ++a) {
            const double fx = 0.5 * (1.0 + sign[a][0] * r[0]);
            const double fy = 0.5 * (1.0 + sign[a][1] * r[1]);
            const double fz = 0.5 * (1.0 + sign[a][2] * r[2]);
            d.n[static_cast<std::size_t>(a)] = fx * fy * fz;
            // d/dxi on [-1,1] is sign/2; the physical gradient carries 2/h
            d.g[static_cast<std::size_t>(a)][0] = sign[a][0] / h[0] * fy * fz;
            d.g[static_cast<std::size_t>(a)][1] = sign[a][1] / h[1] * fx * fz;
            d.g[static_cast<std::size_t>(a)][2] = sign[a][2] / h[2] * fx * fy;
        }
    }
    return out;
}

using Local = std::array<double, 24 * 24>; // (a,c) row-major, index 3a + c

inline void mirror_upper(Local& loc) {
    for (int r = 0; r < 24; ++r)
        for (int c = r + 1; c < 24; ++c) loc[static_cast<std::size_t>(c * 24 + r)] = loc[static_cast<std::size_t>(r * 24 + c)];
}

Local curlcurl_local(const std::vector<QuadPointData>& qps) {
    Local loc{};
    for (const auto& qp : qps) {
        std::array<std::array<double, 3>, 24> curl{};
        for (int a = 0; a < 8; ++a) {
            const auto& g = qp.g[static_cast<std::size_t>(a)];
            // curl(N e_c) = grad N x e_c
            curl[static_cast<std::size_t>(3 * a + 0)] = {0.0, g[2], -g[1]};
            curl[static_cast<std::size_t>(3 * a + 1)] = {-g[2], 0.0, g[0]};
            curl[static_cast<std::size_t>(3 * a + 2)] = {g[1], -g[0], 0.0};
        }
        for (int r = 0; r < 24; ++r) {
            const auto& cr = curl[static_cast<std::size_t>(r)];
            for (int c = r; c < 24; ++c) {
                const auto& cc = curl[static_cast<std::size_t>(c)];
                loc[static_cast<std::size_t>(r * 24 + c)] +=
                    qp.w * (cr[0] * cc[0] + cr[1] * cc[1] + cr[2] * cc[2]);
            }
        }
    }
    mirror_upper(loc);
    return loc;
}

void mass_local(const std::vector<QuadPointData>& qps, const MatrixField& weight,
                const Point& origin, int cell, Local& loc) {
    loc.fill(0.0);
    for (const auto& qp : qps) {
        const Point x{origin[0] + qp.offset[0], origin[1] + qp.offset[1],
                      origin[2] + qp.offset[2]};
        const material::Sym3 w = weight.value(x, cell);
        for (int a = 0; a < 8; ++a)
            for (int b = a; b < 8; ++b) {
                const double nn = qp.w * qp.n[static_cast<std::size_t>(a)] * qp.n[static_cast<std::size_t>(b)];
                for (int ci = 0; ci < 3; ++ci)
                    for (int cj = 0; cj < 3; ++cj) {
                        const int r = 3 * a + ci, c = 3 * b + cj;
                        if (c < r) continue;
                        loc[static_cast<std::size_t>(r * 24 + c)] += nn * w(ci, cj);
                    }
            }
    }
    // (a,ci)-(b,cj) pairs with b<a mirror to b>a blocks; fill the strict
    // lower triangle from the upper one assembled above.
    mirror_upper(loc);
}

// div(eps N_b e_j) at a point: sum_p eps_pj dN_b/dx_p + (div eps)_j N_b
void divergence_coefficients(const QuadPointData& qp, const material::FieldValue& v,
                             std::array<double, 24>& d) {
    std::array<double, 3> diveps{0, 0, 0};
    for (int c = 0; c < 3; ++c)
        for (int p = 0; p < 3; ++p) diveps[static_cast<std::size_t>(c)] += v.jac[static_cast<std::size_t>(p)](p, c);
    for (int a = 0; a < 8; ++a) {
        const auto& g = qp.g[static_cast<std::size_t>(a)];
        for (int c = 0; c < 3; ++c) {
            double s = diveps[static_cast<std::size_t>(c)] * qp.n[static_cast<std::size_t>(a)];
            for (int p = 0; p < 3; ++p) s += v.value(p, c) * g[static_cast<std::size_t>(p)];
            d[static_cast<std::size_t>(3 * a + c)] = s;
        }
    }
}

void penalty_local(const std::vector<QuadPointData>& qps, const MatrixField& eps,
                   const Point& origin, int cell, Local& loc) {
    loc.fill(0.0);
    std::array<double, 24> d{};
    for (const auto& qp : qps) {
        const Point x{origin[0] + qp.offset[0], origin[1] + qp.offset[1],
                      origin[2] + qp.offset[2]};
        divergence_coefficients(qp, eps.eval(x, cell), d);
        for (int r = 0; r < 24; ++r) {
            const double wr = qp.w * d[static_cast<std::size_t>(r)];
            for (int c = r; c < 24; ++c)
                loc[static_cast<std::size_t>(r * 24 + c)] += wr * d[static_cast<std::size_t>(c)];
        }
    }
    mirror_upper(loc);
}

void penalty_cross_local(const std::vector<QuadPointData>& qps, const MatrixField& eps,
                         const MatrixField& eta, const Point& origin, int cell, Local& loc) {
    loc.fill(0.0);
    std::array<double, 24> de{}, dn{};
    for (const auto& qp : qps) {
        const Point x{origin[0] + qp.offset[0], origin[1] + qp.offset[1],
                      origin[2] + qp.offset[2]};
        divergence_coefficients(qp, eps.eval(x, cell), de);
        divergence_coefficients(qp, eta.eval(x, cell), dn);
        for (int r = 0; r < 24; ++r)
            for (int c = r; c < 24; ++c)
                loc[static_cast<std::size_t>(r * 24 + c)] +=
                    qp.w * (de[static_cast<std::size_t>(r)] * dn[static_cast<std::size_t>(c)] +
                            dn[static_cast<std::size_t>(r)] * de[static_cast<std::size_t>(c)]);
    }
    mirror_upper(loc);
}

using Triplet = Eigen::Triplet<double>;

template <typename LocalFn>
SpMat assemble_vector_matrix(const Mesh& mesh, const LocalFn& local_fn) {
    const int ncells = mesh.cell_count();
    const int dim = 3 * mesh.node_count();
    std::vector<Triplet> trip(static_cast<std::size_t>(ncells) * 24 * 24);
    parallel_chunks(ncells, [&](int begin, int end) {
        Local loc;
        for (int cell = begin; cell < end; ++cell) {
            local_fn(cell, loc);
            const auto nodes = mesh.cell_nodes(cell);
            std::size_t slot = static_cast<std::size_t>(cell) * 24 * 24;
            for (int r = 0; r < 24; ++r) {
                const int gr = 3 * nodes[static_cast<std::size_t>(r / 3)] + r % 3;
                for (int c = 0; c < 24; ++c, ++slot)
                    trip[slot] = Triplet(gr, 3 * nodes[static_cast<std::size_t>(c / 3)] + c % 3,
                                         loc[static_cast<std::size_t>(r * 24 + c)]);
            }
        }
    });
    SpMat m(dim, dim);
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

} // namespace

DofMap vector_dof_map(const Mesh& mesh) {
    const auto constrained = geometry::tangential_constraints(mesh);
    DofMap map;
    map.full_dim = 3 * mesh.node_count();
    map.reduced.assign(static_cast<std::size_t>(map.full_dim), -1);
    int next = 0;
    for (int n = 0; n < mesh.node_count(); ++n)
        for (int c = 0; c < 3; ++c)
            if (!(constrained[static_cast<std::size_t>(n)] & (1u << c)))
                map.reduced[static_cast<std::size_t>(3 * n + c)] = next++;
    map.reduced_dim = next;
    return map;
}

DofMap scalar_dof_map(const Mesh& mesh) {
    DofMap map;
    map.full_dim = mesh.node_count();
    map.reduced.assign(static_cast<std::size_t>(map.full_dim), -1);
    int next = 0;
    for (int n = 0; n < mesh.node_count(); ++n)
        if (!mesh.is_boundary_node(n)) map.reduced[static_cast<std::size_t>(n)] = next++;
    map.reduced_dim = next;
    return map;
}

SpMat reduce(const SpMat& full, const DofMap& map) {
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(full.nonZeros()));
    for (int k = 0; k < full.outerSize(); ++k)
        for (SpMat::InnerIterator it(full, k); it; ++it) {
            const int r = map(static_cast<int>(it.row()));
            const int c = map(static_cast<int>(it.col()));
            if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
        }
    SpMat m(map.reduced_dim, map.reduced_dim);
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

SpMat assemble_curlcurl(const Mesh& mesh, const QuadratureRule& rule) {
    const auto qps = shape_data(mesh, rule);
    const Local base = curlcurl_local(qps); // identical for every cell
    return assemble_vector_matrix(mesh, [&](int, Local& loc) { loc = base; });
}

SpMat assemble_mass(const Mesh& mesh, const QuadratureRule& rule, const MatrixField& weight) {
    const auto qps = shape_data(mesh, rule);
    return assemble_vector_matrix(mesh, [&](int cell, Local& loc) {
        mass_local(qps, weight, mesh.cell_origin(cell), cell, loc);
    });
}

SpMat assemble_penalty(const Mesh& mesh, const QuadratureRule& rule, const MatrixField& eps) {
    const auto qps = shape_data(mesh, rule);
    return assemble_vector_matrix(mesh, [&](int cell, Local& loc) {
        penalty_local(qps, eps, mesh.cell_origin(cell), cell, loc);
    });
}

SpMat assemble_penalty_cross(const Mesh& mesh, const QuadratureRule& rule, const MatrixField& eps,
                             const MatrixField& eta) {
    const auto qps = shape_data(mesh, rule);
    return assemble_vector_matrix(mesh, [&](int cell, Local& loc) {
        penalty_cross_local(qps, eps, eta, mesh.cell_origin(cell), cell, loc);
    });
}

OperatorPencil assemble_pencil(const Mesh& mesh, const QuadratureRule& rule,
                               const PermittivityField& eps, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("assemble_pencil: tau must be positive");
    OperatorPencil pencil;
    pencil.tau = tau;
    pencil.dof_map = vector_dof_map(mesh);
    pencil.K = reduce(assemble_curlcurl(mesh, rule), pencil.dof_map);
    pencil.P = reduce(assemble_penalty(mesh, rule, eps.field), pencil.dof_map);
    pencil.M = reduce(assemble_mass(mesh, rule, eps.field), pencil.dof_map);
    return pencil;
}

ScalarPencil assemble_scalar_pencil(const Mesh& mesh, const QuadratureRule& rule,
                                    const PermittivityField& eps) {
    const auto qps = shape_data(mesh, rule);
    const int ncells = mesh.cell_count();
    const int dim = mesh.node_count();

    std::vector<Triplet> tk(static_cast<std::size_t>(ncells) * 64);
    std::vector<Triplet> tm(static_cast<std::size_t>(ncells) * 64);
    parallel_chunks(ncells, [&](int begin, int end) {
        for (int cell = begin; cell < end; ++cell) {
            std::array<double, 64> lk{}, lm{};
            const Point origin = mesh.cell_origin(cell);
            for (const auto& qp : qps) {
                const Point x{origin[0] + qp.offset[0], origin[1] + qp.offset[1],
                              origin[2] + qp.offset[2]};
                const material::Sym3 e = eps.field.value(x, cell);
                std::array<std::array<double, 3>, 8> eg{};
                for (int a = 0; a < 8; ++a)
                    eg[static_cast<std::size_t>(a)] = e.apply(qp.g[static_cast<std::size_t>(a)]);
                for (int a = 0; a < 8; ++a)
                    for (int b = a; b < 8; ++b) {
                        const auto& ga = qp.g[static_cast<std::size_t>(a)];
                        const auto& egb = eg[static_cast<std::size_t>(b)];
                        lk[static_cast<std::size_t>(a * 8 + b)] +=
                            qp.w * (ga[0] * egb[0] + ga[1] * egb[1] + ga[2] * egb[2]);
                        lm[static_cast<std::size_t>(a * 8 + b)] +=
                            qp.w * qp.n[static_cast<std::size_t>(a)] * qp.n[static_cast<std::size_t>(b)];
                    }
            }
            for (int a = 0; a < 8; ++a)
                for (int b = 0; b < a; ++b) {
                    lk[static_cast<std::size_t>(a * 8 + b)] = lk[static_cast<std::size_t>(b * 8 + a)];
                    lm[static_cast<std::size_t>(a * 8 + b)] = lm[static_cast<std::size_t>(b * 8 + a)];
                }
            const auto nodes = mesh.cell_nodes(cell);
            std::size_t slot = static_cast<std::size_t>(cell) * 64;
            for (int a = 0; a < 8; ++a)
                for (int b = 0; b < 8; ++b, ++slot) {
                    tk[slot] = Triplet(nodes[static_cast<std::size_t>(a)], nodes[static_cast<std::size_t>(b)],
                                       lk[static_cast<std::size_t>(a * 8 + b)]);
                    tm[slot] = Triplet(nodes[static_cast<std::size_t>(a)], nodes[static_cast<std::size_t>(b)],
                                       lm[static_cast<std::size_t>(a * 8 + b)]);
                }
        }
    });

    SpMat kfull(dim, dim), mfull(dim, dim);
    kfull.setFromTriplets(tk.begin(), tk.end());
    mfull.setFromTriplets(tm.begin(), tm.end());

    ScalarPencil p;
    p.dof_map = scalar_dof_map(mesh);
    p.K = reduce(kfull, p.dof_map);
    p.M = reduce(mfull, p.dof_map);
    return p;
}

void write_coo(const SpMat& m, std::ostream& os) {
    os << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
    char buf[64];
    for (int k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it) {
            std::snprintf(buf, sizeof(buf), "%ld %ld %.16e\n", static_cast<long>(it.row()),
                          static_cast<long>(it.col()), it.value());
            os << buf;
        }
}

} // namespace cavspec::assembly
