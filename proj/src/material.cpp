#include "cavspec/material.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cavspec::material {

Sym3 Sym3::operator+(const Sym3& o) const {
    Sym3 r;
    for (std::size_t i = 0; i < 6; ++i) r.a[i] = a[i] + o.a[i];
    return r;
}

Sym3 Sym3::operator-(const Sym3& o) const {
    Sym3 r;
    for (std::size_t i = 0; i < 6; ++i) r.a[i] = a[i] - o.a[i];
    return r;
}

Sym3 Sym3::scaled(double s) const {
    Sym3 r;
    for (std::size_t i = 0; i < 6; ++i) r.a[i] = a[i] * s;
    return r;
}

std::array<double, 3> Sym3::apply(const std::array<double, 3>& v) const {
    std::array<double, 3> r{0, 0, 0};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[static_cast<std::size_t>(i)] += (*this)(i, j) * v[static_cast<std::size_t>(j)];
    return r;
}

double Sym3::max_abs_entry() const {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

std::array<double, 3> sym3_eigenvalues(const Sym3& m) {
    const double axx = m(0, 0), ayy = m(1, 1), azz = m(2, 2);
    const double ayz = m(1, 2), axz = m(0, 2), axy = m(0, 1);

    const double tr = axx + ayy + azz;
    const double q = tr / 3.0;
    const double bxx = axx - q, byy = ayy - q, bzz = azz - q;
    const double p2 = (bxx * bxx + byy * byy + bzz * bzz) / 6.0 +
                      (axy * axy + axz * axz + ayz * ayz) / 3.0;

    std::array<double, 3> eig{q, q, q};
    if (p2 > 0.0) {
        const double p = std::sqrt(p2);
        const double detb = bxx * (byy * bzz - ayz * ayz) - axy * (axy * bzz - ayz * axz) +
                            axz * (axy * ayz - byy * axz);
        double r = detb / (2.0 * p * p * p);
        r = std::clamp(r, -1.0, 1.0);
        const double phi = std::acos(r) / 3.0;
        eig[2] = q + 2.0 * p * std::cos(phi);
        eig[0] = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
        eig[1] = tr - eig[0] - eig[2];
    }

    // characteristic polynomial coefficients for the Newton polish
    const double c2 = tr;
    const double c1 = axx * ayy + ayy * azz + axx * azz - axy * axy - axz * axz - ayz * ayz;
    const double c0 = axx * (ayy * azz - ayz * ayz) - axy * (axy * azz - ayz * axz) +
                      axz * (axy * ayz - ayy * axz);
    const double scale = std::max(1.0, m.max_abs_entry());
    for (double& lambda : eig) {
        for (int it = 0; it < 2; ++it) {
            const double pv = ((lambda - c2) * lambda + c1) * lambda - c0;
            const double dv = (3.0 * lambda - 2.0 * c2) * lambda + c1;
            if (std::abs(dv) < 1e-8 * scale * scale) break;
            lambda -= pv / dv;
        }
    }
    std::sort(eig.begin(), eig.end());
    return eig;
}

namespace detail {

struct FieldImpl {
    virtual ~FieldImpl() = default;
    virtual FieldValue eval(const Point& x, int cell) const = 0;
    virtual bool has_jacobian() const { return true; }
    virtual FieldKind kind() const = 0;
    virtual nlohmann::ordered_json describe() const = 0;
};

namespace {

struct ConstantField final : FieldImpl {
    Sym3 value;

    FieldValue eval(const Point&, int) const override { return FieldValue{value, {}}; }
    FieldKind kind() const override { return FieldKind::Constant; }
    nlohmann::ordered_json describe() const override {
        return {{"kind", "constant"}, {"entries", value.a}};
    }
};

struct IsotropicField final : FieldImpl {
    expr::ScalarExpr e;

    FieldValue eval(const Point& x, int) const override {
        const expr::Dual3 d = e.eval(x);
        FieldValue r;
        for (int i = 0; i < 3; ++i) {
            r.value.at(i, i) = d.v;
            for (int k = 0; k < 3; ++k) r.jac[static_cast<std::size_t>(k)].at(i, i) = d.d[static_cast<std::size_t>(k)];
        }
        return r;
    }
    FieldKind kind() const override { return FieldKind::ScalarIsotropic; }
    nlohmann::ordered_json describe() const override {
        return {{"kind", "scalar-isotropic"}, {"expr", e.text()}};
    }
};

// packed slot -> (i,j) of the represented entry
constexpr int slot_i[6] = {0, 1, 2, 1, 0, 0};
constexpr int slot_j[6] = {0, 1, 2, 2, 2, 1};

struct ComponentsField final : FieldImpl {
    std::array<expr::ScalarExpr, 6> comps; // order (11, 22, 33, 23, 13, 12)

    FieldValue eval(const Point& x, int) const override {
        FieldValue r;
        for (std::size_t s = 0; s < 6; ++s) {
            if (comps[s].is_zero()) continue;
            const expr::Dual3 d = comps[s].eval(x);
            r.value.a[s] = d.v;
            for (std::size_t k = 0; k < 3; ++k) r.jac[k].a[s] = d.d[k];
        }
        return r;
    }
    FieldKind kind() const override { return FieldKind::AnalyticMatrix; }
    nlohmann::ordered_json describe() const override {
        nlohmann::ordered_json entries;
        static constexpr const char* names[6] = {"11", "22", "33", "23", "13", "12"};
        for (std::size_t s = 0; s < 6; ++s)
            if (!comps[s].is_zero()) entries[names[s]] = comps[s].text();
        return {{"kind", "analytic-matrix"}, {"entries", entries}};
    }
};

struct PerCellField final : FieldImpl {
    std::shared_ptr<const Mesh> mesh;
    std::vector<Sym3> values;

    FieldValue eval(const Point& x, int cell) const override {
        if (cell < 0) cell = mesh->locate_cell(x);
        return FieldValue{values[static_cast<std::size_t>(cell)], {}};
    }
    bool has_jacobian() const override { return false; }
    FieldKind kind() const override { return FieldKind::PerCellConstant; }
    nlohmann::ordered_json describe() const override {
        return {{"kind", "per-cell-constant"}, {"cells", values.size()}};
    }
};

struct ComboField final : FieldImpl {
    std::shared_ptr<const FieldImpl> base;
    std::vector<std::pair<double, std::shared_ptr<const FieldImpl>>> terms;

    FieldValue eval(const Point& x, int cell) const override {
        FieldValue r = base->eval(x, cell);
        for (const auto& [c, f] : terms) {
            const FieldValue t = f->eval(x, cell);
            for (std::size_t s = 0; s < 6; ++s) {
                r.value.a[s] += c * t.value.a[s];
                for (std::size_t k = 0; k < 3; ++k) r.jac[k].a[s] += c * t.jac[k].a[s];
            }
        }
        return r;
    }
    bool has_jacobian() const override {
        if (!base->has_jacobian()) return false;
        for (const auto& [c, f] : terms)
            if (!f->has_jacobian()) return false;
        return true;
    }
    FieldKind kind() const override { return FieldKind::Combination; }
    nlohmann::ordered_json describe() const override {
        nlohmann::ordered_json t = nlohmann::ordered_json::array();
        for (const auto& [c, f] : terms) t.push_back({{"coef", c}, {"field", f->describe()}});
        return {{"kind", "combination"}, {"base", base->describe()}, {"terms", t}};
    }
};

} // namespace
} // namespace detail

MatrixField::MatrixField() {
    auto c = std::make_shared<detail::ConstantField>();
    impl_ = std::move(c);
}

MatrixField::MatrixField(std::shared_ptr<const detail::FieldImpl> impl) : impl_(std::move(impl)) {}

MatrixField MatrixField::constant(const Sym3& value) {
    auto c = std::make_shared<detail::ConstantField>();
    c->value = value;
    return MatrixField(std::move(c));
}

MatrixField MatrixField::identity() { return constant(Sym3::identity()); }

MatrixField MatrixField::isotropic(const expr::ScalarExpr& e) {
    auto f = std::make_shared<detail::IsotropicField>();
    f->e = e;
    return MatrixField(std::move(f));
}

MatrixField MatrixField::components(const std::array<expr::ScalarExpr, 6>& comps) {
    auto f = std::make_shared<detail::ComponentsField>();
    f->comps = comps;
    return MatrixField(std::move(f));
}

MatrixField MatrixField::per_cell(const Mesh& mesh, std::vector<Sym3> values) {
    if (static_cast<int>(values.size()) != mesh.cell_count())
        throw std::invalid_argument("per_cell: one matrix per cell required");
    auto f = std::make_shared<detail::PerCellField>();
    f->mesh = std::make_shared<Mesh>(mesh);
    f->values = std::move(values);
    return MatrixField(std::move(f));
}

MatrixField MatrixField::combination(MatrixField base,
                                     std::vector<std::pair<double, MatrixField>> terms) {
    auto f = std::make_shared<detail::ComboField>();
    f->base = base.impl_;
    for (auto& [c, t] : terms) f->terms.emplace_back(c, t.impl_);
    return MatrixField(std::move(f));
}

FieldValue MatrixField::eval(const Point& x, int cell) const { return impl_->eval(x, cell); }

Sym3 MatrixField::value(const Point& x, int cell) const { return impl_->eval(x, cell).value; }

bool MatrixField::has_jacobian() const { return impl_->has_jacobian(); }

FieldKind MatrixField::kind() const { return impl_->kind(); }

std::string MatrixField::kind_name() const {
    switch (kind()) {
    case FieldKind::Constant: return "constant";
    case FieldKind::ScalarIsotropic: return "scalar-isotropic";
    case FieldKind::AnalyticMatrix: return "analytic-matrix";
    case FieldKind::PerCellConstant: return "per-cell-constant";
    case FieldKind::Combination: return "combination";
    }
    return "?";
}

std::string MatrixField::to_json() const { return impl_->describe().dump(); }

std::array<double, 3> matrix_divergence(const MatrixField& field, const Point& x, int cell) {
    if (!field.has_jacobian())
        throw std::invalid_argument("matrix_divergence: field carries no jacobian");
    const FieldValue v = field.eval(x, cell);
    std::array<double, 3> div{0, 0, 0};
    for (int c = 0; c < 3; ++c)
        for (int p = 0; p < 3; ++p) div[static_cast<std::size_t>(c)] += v.jac[static_cast<std::size_t>(p)](p, c);
    return div;
}

PermittivityField perturbed(const PermittivityField& base, double t,
                            const PerturbationDirection& dir) {
    return PermittivityField{MatrixField::combination(base.field, {{t, dir.field}})};
}

NotAdmissibleError::NotAdmissibleError(const Point& where_, double min_eig_)
    : std::runtime_error([&] {
          std::ostringstream os;
          os.precision(17);
          os << "permittivity not admissible: smallest eigenvalue " << min_eig_ << " at ("
             << where_[0] << ", " << where_[1] << ", " << where_[2] << ")";
          return os.str();
      }()),
      where(where_), min_eig(min_eig_) {}

namespace {

template <typename F>
void for_each_sample(const SamplingSpec& s, F&& fn) {
    const Mesh& mesh = *s.mesh;
    const QuadratureRule& rule = *s.rule;
    const auto h = mesh.cell_size();
    for (int cell = 0; cell < mesh.cell_count(); ++cell) {
        const Point o = mesh.cell_origin(cell);
        for (int q = 0; q < rule.size(); ++q) {
            const Point& r = rule.points[static_cast<std::size_t>(q)];
            fn(Point{o[0] + 0.5 * (r[0] + 1.0) * h[0], o[1] + 0.5 * (r[1] + 1.0) * h[1],
                     o[2] + 0.5 * (r[2] + 1.0) * h[2]},
               cell);
        }
    }
    if (s.oversample > 0) {
        const int ppa = rule.points_per_axis();
        std::array<int, 3> n{};
        for (int d = 0; d < 3; ++d)
            n[static_cast<std::size_t>(d)] =
                s.oversample * ppa * mesh.subdivisions()[static_cast<std::size_t>(d)];
        const auto& L = mesh.box().extent;
        for (int k = 0; k < n[2]; ++k)
            for (int j = 0; j < n[1]; ++j)
                for (int i = 0; i < n[0]; ++i) {
                    const Point x{(i + 0.5) * L[0] / n[0], (j + 0.5) * L[1] / n[1],
                                  (k + 0.5) * L[2] / n[2]};
                    fn(x, -1);
                }
    }
}

std::optional<Sym3> fold_constant(const MatrixField& f) {
    if (f.kind() == FieldKind::Constant) return f.value(Point{0, 0, 0});
    return std::nullopt;
}

double w1inf_of_value(const FieldValue& v) {
    double m = 0.0;
    for (std::size_t s = 0; s < 6; ++s) {
        m = std::max(m, std::abs(v.value.a[s]));
        for (std::size_t k = 0; k < 3; ++k) m = std::max(m, std::abs(v.jac[k].a[s]));
    }
    return m;
}

} // namespace

CoercivityEstimate audit_admissibility(const PermittivityField& eps, const Mesh& mesh,
                                       const QuadratureRule& rule, int oversample) {
    CoercivityEstimate best;
    best.c_eps = std::numeric_limits<double>::infinity();
    SamplingSpec sampling{&mesh, &rule, oversample};
    for_each_sample(sampling, [&](const Point& x, int cell) {
        const Sym3 v = eps.field.value(x, cell);
        const double lmin = sym3_eigenvalues(v)[0];
        if (lmin < best.c_eps) {
            best.c_eps = lmin;
            best.argmin_point = x;
        }
    });
    if (!(best.c_eps > 0.0)) throw NotAdmissibleError(best.argmin_point, best.c_eps);
    return best;
}

double w1inf_distance(const MatrixField& f1, const MatrixField& f2, const SamplingSpec& sampling) {
    const auto c1 = fold_constant(f1);
    const auto c2 = fold_constant(f2);
    if (c1 && c2) return (*c1 - *c2).max_abs_entry();
    double m = 0.0;
    for_each_sample(sampling, [&](const Point& x, int cell) {
        const FieldValue v1 = f1.eval(x, cell);
        const FieldValue v2 = f2.eval(x, cell);
        FieldValue d;
        d.value = v1.value - v2.value;
        for (std::size_t k = 0; k < 3; ++k) d.jac[k] = v1.jac[k] - v2.jac[k];
        m = std::max(m, w1inf_of_value(d));
    });
    return m;
}

double w1inf_norm(const MatrixField& f, const SamplingSpec& sampling) {
    if (const auto c = fold_constant(f)) return c->max_abs_entry();
    double m = 0.0;
    for_each_sample(sampling, [&](const Point& x, int cell) {
        m = std::max(m, w1inf_of_value(f.eval(x, cell)));
    });
    return m;
}

PerturbationDirection make_splitting_direction(int h, const expr::ScalarExpr& bump,
                                               const SamplingSpec& sampling) {
    if (h < 1 || h > 3) throw std::invalid_argument("make_splitting_direction: h must be 1..3");
    std::array<expr::ScalarExpr, 6> comps; // zero-initialized
    comps[static_cast<std::size_t>(h - 1)] = bump;
    MatrixField raw = MatrixField::components(comps);
    const double n = w1inf_norm(raw, sampling);
    if (n <= 0.0)
        throw std::invalid_argument("make_splitting_direction: bump is identically zero");
    comps[static_cast<std::size_t>(h - 1)] = bump.scaled(1.0 / n);
    return PerturbationDirection{MatrixField::components(comps), 1.0};
}

PerturbationDirection make_diagonal_direction(const std::array<expr::ScalarExpr, 3>& bumps,
                                              const SamplingSpec& sampling) {
    std::array<expr::ScalarExpr, 6> comps;
    comps[0] = bumps[0];
    comps[1] = bumps[1];
    comps[2] = bumps[2];
    MatrixField raw = MatrixField::components(comps);
    const double n = w1inf_norm(raw, sampling);
    if (n <= 0.0) throw std::invalid_argument("make_diagonal_direction: all bumps vanish");
    for (int d = 0; d < 3; ++d) comps[static_cast<std::size_t>(d)] = bumps[static_cast<std::size_t>(d)].scaled(1.0 / n);
    return PerturbationDirection{MatrixField::components(comps), 1.0};
}

PerturbationDirection make_constant_direction(const Sym3& matrix, double target_norm) {
    const double n = matrix.max_abs_entry();
    if (n <= 0.0) throw std::invalid_argument("make_constant_direction: zero matrix");
    return PerturbationDirection{MatrixField::constant(matrix.scaled(target_norm / n)),
                                 target_norm};
}

} // namespace cavspec::material
