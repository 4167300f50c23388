#include "cavspec/lab.hpp"

#include "cavspec/version.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace cavspec::lab {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using material::MatrixField;
using material::PermittivityField;
using material::PerturbationDirection;
using material::Sym3;
using spectra::Family;
using spectra::Spectrum;

namespace {

constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------- sha1 ----

struct Sha1 {
    std::uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};
    std::uint64_t total = 0;
    unsigned char buf[64];
    std::size_t fill = 0;

    static std::uint32_t rol(std::uint32_t v, int s) { return (v << s) | (v >> (32 - s)); }

    void block(const unsigned char* p) {
        std::uint32_t w[80];
        for (int i = 0; i < 16; ++i)
            w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
                   (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
        for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
        std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
        for (int i = 0; i < 80; ++i) {
            std::uint32_t f, k;
            if (i < 20) {
                f = (b & c) | (~b & d);
                k = 0x5A827999u;
            } else if (i < 40) {
                f = b ^ c ^ d;
                k = 0x6ED9EBA1u;
            } else if (i < 60) {
                f = (b & c) | (b & d) | (c & d);
                k = 0x8F1BBCDCu;
            } else {
                f = b ^ c ^ d;
                k = 0xCA62C1D6u;
            }
            const std::uint32_t t = rol(a, 5) + f + e + k + w[i];
            e = d;
            d = c;
            c = rol(b, 30);
            b = a;
            a = t;
        }
        h[0] += a;
        h[1] += b;
        h[2] += c;
        h[3] += d;
        h[4] += e;
    }

    void update(const void* data, std::size_t len) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        total += len;
        while (len > 0) {
            const std::size_t take = std::min(len, sizeof(buf) - fill);
            std::memcpy(buf + fill, p, take);
            fill += take;
            p += take;
            len -= take;
            if (fill == sizeof(buf)) {
                block(buf);
                fill = 0;
            }
        }
    }

    std::string hex() {
        const std::uint64_t bits = total * 8;
        unsigned char pad = 0x80;
        update(&pad, 1);
        unsigned char zero = 0;
        while (fill != 56) update(&zero, 1);
        unsigned char len[8];
        for (int i = 0; i < 8; ++i) len[i] = static_cast<unsigned char>(bits >> (56 - 8 * i));
        update(len, 8);
        std::ostringstream os;
        for (std::uint32_t v : h)
            for (int i = 3; i >= 0; --i) {
                static const char* digits = "0123456789abcdef";
                os << digits[(v >> (8 * i + 4)) & 0xF] << digits[(v >> (8 * i)) & 0xF];
            }
        return os.str();
    }
};

// ------------------------------------------------------------- helpers ----

std::string join_csv(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        line += cells[i];
    }
    line += '\n';
    return line;
}

// separation-of-variables oracle used as the expected column of the
// validation table: lambda = sum (k_i pi / L_i)^2 with one mode when exactly
// one index vanishes and two when none does; Dirichlet needs all k_i >= 1
std::vector<double> analytic_maxwell(const std::array<double, 3>& extent, std::size_t count) {
    std::vector<double> out;
    for (int k1 = 0; k1 <= 12; ++k1)
        for (int k2 = 0; k2 <= 12; ++k2)
            for (int k3 = 0; k3 <= 12; ++k3) {
                const int zeros = (k1 == 0) + (k2 == 0) + (k3 == 0);
                if (zeros >= 2) continue;
                const double lam = k1 * k1 * kPi * kPi / (extent[0] * extent[0]) +
                                   k2 * k2 * kPi * kPi / (extent[1] * extent[1]) +
                                   k3 * k3 * kPi * kPi / (extent[2] * extent[2]);
                for (int m = 0; m < (zeros == 1 ? 1 : 2); ++m) out.push_back(lam);
            }
    std::sort(out.begin(), out.end());
    if (out.size() > count) out.resize(count);
    return out;
}

std::vector<double> analytic_dirichlet(const std::array<double, 3>& extent, std::size_t count) {
    std::vector<double> out;
    for (int k1 = 1; k1 <= 12; ++k1)
        for (int k2 = 1; k2 <= 12; ++k2)
            for (int k3 = 1; k3 <= 12; ++k3)
                out.push_back(k1 * k1 * kPi * kPi / (extent[0] * extent[0]) +
                              k2 * k2 * kPi * kPi / (extent[1] * extent[1]) +
                              k3 * k3 * kPi * kPi / (extent[2] * extent[2]));
    std::sort(out.begin(), out.end());
    if (out.size() > count) out.resize(count);
    return out;
}

struct FieldSpec {
    PermittivityField field;
    std::string name;
    ojson echo;
};

const std::array<const char*, 6> kComponentKeys{"11", "22", "33", "23", "13", "12"};

FieldSpec make_permittivity(const json& spec, std::vector<ConfigIssue>& issues,
                            const std::string& where) {
    FieldSpec out;
    out.field = PermittivityField{MatrixField::identity()};
    if (spec.contains("preset")) {
        const std::string p = spec["preset"].get<std::string>();
        out.name = p;
        out.echo = ojson{{"preset", p}};
        if (p == "eps-identity") {
            out.field = PermittivityField{MatrixField::identity()};
        } else if (p == "eps-diag") {
            out.field = PermittivityField{MatrixField::constant(Sym3::diagonal(2, 3, 4))};
        } else if (p == "eps-sine") {
            std::array<expr::ScalarExpr, 6> comps;
            comps[0] = expr::ScalarExpr::parse("1 + 0.5*sin(x)");
            comps[1] = expr::ScalarExpr::constant(1.0);
            comps[2] = expr::ScalarExpr::constant(1.0);
            out.field = PermittivityField{MatrixField::components(comps)};
        } else {
            issues.push_back({where + "/preset", "unknown permittivity preset '" + p + "'"});
        }
        return out;
    }
    if (spec.contains("components")) {
        const json& comps = spec["components"];
        if (!comps.is_object()) {
            issues.push_back({where + "/components", "must be an object of entry expressions"});
            return out;
        }
        std::array<expr::ScalarExpr, 6> parsed;
        // missing diagonal entries default to 1, off-diagonal to 0
        parsed[0] = parsed[1] = parsed[2] = expr::ScalarExpr::constant(1.0);
        ojson echo;
        for (const auto& [key, value] : comps.items()) {
            const auto it = std::find(kComponentKeys.begin(), kComponentKeys.end(), key);
            if (it == kComponentKeys.end()) {
                issues.push_back({where + "/components/" + key, "unknown matrix entry"});
                continue;
            }
            if (!value.is_string()) {
                issues.push_back({where + "/components/" + key, "expected an expression string"});
                continue;
            }
            try {
                parsed[static_cast<std::size_t>(it - kComponentKeys.begin())] =
                    expr::ScalarExpr::parse(value.get<std::string>());
                echo[key] = value.get<std::string>();
            } catch (const expr::ParseError& e) {
                issues.push_back({where + "/components/" + key, e.what()});
            }
        }
        out.field = PermittivityField{MatrixField::components(parsed)};
        out.name = "components";
        out.echo = ojson{{"components", echo}};
        return out;
    }
    issues.push_back({where, "expected 'preset' or 'components'"});
    return out;
}

Sym3 random_symmetric(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Sym3 m{};
    for (int i = 0; i < 6; ++i) m.a[static_cast<std::size_t>(i)] = u(rng);
    return m;
}

std::string family_cell(Family f) { return spectra::family_name(f); }

std::string format_cluster_range(const std::vector<int>& indices) {
    if (indices.size() == 1) return std::to_string(indices.front() + 1);
    return std::to_string(indices.front() + 1) + "-" + std::to_string(indices.back() + 1);
}

std::string spectrum_csv(const Spectrum& s) {
    std::string csv = "index,sigma,label,div_residual,cluster_id\n";
    for (int i = 0; i < s.size(); ++i) {
        const auto& e = s.entries[static_cast<std::size_t>(i)];
        csv += join_csv({std::to_string(i + 1), format_double(e.sigma), family_cell(e.label),
                         format_double(e.div_residual), std::to_string(e.cluster)});
    }
    return csv;
}

std::string branches_svg(const std::vector<double>& t, const Eigen::MatrixXd& values) {
    const double width = 640, height = 420, margin = 50;
    double tmin = t.front(), tmax = t.back();
    double vmin = values.minCoeff(), vmax = values.maxCoeff();
    if (vmax - vmin < 1e-12) vmax = vmin + 1e-12;
    auto xmap = [&](double x) {
        return margin + (x - tmin) / (tmax - tmin) * (width - 2 * margin);
    };
    auto ymap = [&](double v) {
        return height - margin - (v - vmin) / (vmax - vmin) * (height - 2 * margin);
    };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width << " " << height
       << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << format_double(xmap(tmin)) << "\" y1=\"" << format_double(ymap(vmin))
       << "\" x2=\"" << format_double(xmap(tmax)) << "\" y2=\"" << format_double(ymap(vmin))
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << format_double(xmap(0.0)) << "\" y1=\"" << format_double(ymap(vmin))
       << "\" x2=\"" << format_double(xmap(0.0)) << "\" y2=\"" << format_double(ymap(vmax))
       << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    for (Eigen::Index b = 0; b < values.rows(); ++b) {
        os << "<polyline fill=\"none\" stroke=\"" << colors[b % 6]
           << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (i) os << ' ';
            os << format_double(xmap(t[i])) << ','
               << format_double(ymap(values(b, static_cast<Eigen::Index>(i))));
        }
        os << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace

std::string content_hash(const std::string& content) {
    Sha1 sha;
    const std::string header = "blob " + std::to_string(content.size());
    sha.update(header.data(), header.size() + 1); // include the NUL
    sha.update(content.data(), content.size());
    return sha.hex();
}

std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

const char* kind_name(ExperimentKind k) {
    switch (k) {
    case ExperimentKind::Validate: return "validate";
    case ExperimentKind::Spectrum: return "spectrum";
    case ExperimentKind::DerivativeCheck: return "derivative-check";
    case ExperimentKind::Branches: return "branches";
    case ExperimentKind::Split: return "split";
    case ExperimentKind::Genericity: return "genericity";
    case ExperimentKind::Lipschitz: return "lipschitz";
    }
    return "?";
}

std::vector<PresetInfo> domain_presets() {
    return {{"cube-pi", "cube (0,pi)^3"},
            {"box-anisotropic", "box (0,pi) x (0,1.1pi) x (0,1.3pi)"},
            {"box-elongated", "box (0,pi) x (0,1.1pi) x (0,2.6pi)"}};
}

std::vector<PresetInfo> permittivity_presets() {
    return {{"eps-identity", "identity matrix"},
            {"eps-diag", "constant diag(2, 3, 4)"},
            {"eps-sine", "identity plus 0.5 sin(x) in the (1,1) entry"}};
}

namespace {

bool domain_preset_extent(const std::string& name, std::array<double, 3>& extent) {
    if (name == "cube-pi") {
        extent = {kPi, kPi, kPi};
        return true;
    }
    if (name == "box-anisotropic") {
        extent = {kPi, 1.1 * kPi, 1.3 * kPi};
        return true;
    }
    if (name == "box-elongated") {
        extent = {kPi, 1.1 * kPi, 2.6 * kPi};
        return true;
    }
    return false;
}

const std::vector<std::string> kKnownTopLevel{"domain",      "mesh",   "quadrature",
                                              "permittivity", "tau",    "eigen_count",
                                              "tolerances",  "seed",   "experiment",
                                              "output"};

} // namespace

std::vector<ConfigIssue> validate_config(const std::string& json_text) {
    std::vector<ConfigIssue> issues;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        issues.push_back({"", std::string("not valid JSON: ") + e.what()});
        return issues;
    }
    if (!doc.is_object()) {
        issues.push_back({"", "config must be a JSON object"});
        return issues;
    }
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (std::find(kKnownTopLevel.begin(), kKnownTopLevel.end(), key) == kKnownTopLevel.end())
            issues.push_back({"/" + key, "unknown field"});
    }

    // domain
    if (!doc.contains("domain")) {
        issues.push_back({"/domain", "required"});
    } else {
        const json& d = doc["domain"];
        if (d.contains("preset")) {
            std::array<double, 3> extent;
            if (!d["preset"].is_string() ||
                !domain_preset_extent(d["preset"].get<std::string>(), extent))
                issues.push_back({"/domain/preset", "unknown domain preset"});
        } else if (d.contains("extent")) {
            const json& e = d["extent"];
            if (!e.is_array() || e.size() != 3)
                issues.push_back({"/domain/extent", "expected three lengths"});
            else
                for (int i = 0; i < 3; ++i)
                    if (!e[static_cast<std::size_t>(i)].is_number() ||
                        e[static_cast<std::size_t>(i)].get<double>() <= 0.0)
                        issues.push_back({"/domain/extent/" + std::to_string(i),
                                          "must be strictly positive"});
        } else {
            issues.push_back({"/domain", "expected 'preset' or 'extent'"});
        }
    }

    // mesh
    if (!doc.contains("mesh") || !doc["mesh"].contains("subdivisions")) {
        issues.push_back({"/mesh/subdivisions", "required"});
    } else {
        const json& s = doc["mesh"]["subdivisions"];
        if (!s.is_array() || s.size() != 3)
            issues.push_back({"/mesh/subdivisions", "expected three positive integers"});
        else
            for (int i = 0; i < 3; ++i)
                if (!s[static_cast<std::size_t>(i)].is_number_integer() ||
                    s[static_cast<std::size_t>(i)].get<int>() < 1)
                    issues.push_back(
                        {"/mesh/subdivisions/" + std::to_string(i), "must be an integer >= 1"});
    }

    if (doc.contains("quadrature")) {
        const json& q = doc["quadrature"];
        if (!q.contains("degree") || !q["degree"].is_number_integer() ||
            q["degree"].get<int>() < 1 || q["degree"].get<int>() > 13)
            issues.push_back({"/quadrature/degree", "must be an integer in [1, 13]"});
    }

    if (doc.contains("permittivity")) {
        std::vector<ConfigIssue> sub;
        make_permittivity(doc["permittivity"], sub, "/permittivity");
        issues.insert(issues.end(), sub.begin(), sub.end());
    }

    if (!doc.contains("tau"))
        issues.push_back({"/tau", "required"});
    else if (!doc["tau"].is_number() || doc["tau"].get<double>() <= 0.0)
        issues.push_back({"/tau", "must be a positive number"});

    if (!doc.contains("eigen_count"))
        issues.push_back({"/eigen_count", "required"});
    else if (!doc["eigen_count"].is_number_integer() || doc["eigen_count"].get<int>() < 1)
        issues.push_back({"/eigen_count", "must be an integer >= 1"});

    if (doc.contains("tolerances")) {
        for (const auto& [key, value] : doc["tolerances"].items()) {
            static const std::vector<std::string> known{"solver_tol", "cluster_tol", "r_max",
                                                        "match_tol", "gap_min"};
            if (std::find(known.begin(), known.end(), key) == known.end())
                issues.push_back({"/tolerances/" + key, "unknown tolerance"});
            else if (!value.is_number() || value.get<double>() <= 0.0)
                issues.push_back({"/tolerances/" + key, "must be a positive number"});
        }
    }

    if (doc.contains("seed") &&
        (!doc["seed"].is_number_integer() || doc["seed"].get<std::int64_t>() < 0))
        issues.push_back({"/seed", "must be a nonnegative integer"});

    // experiment
    if (!doc.contains("experiment") || !doc["experiment"].is_object()) {
        issues.push_back({"/experiment", "required object"});
        return issues;
    }
    const json& ex = doc["experiment"];
    if (!ex.contains("kind") || !ex["kind"].is_string()) {
        issues.push_back({"/experiment/kind", "required string"});
        return issues;
    }
    const std::string kind = ex["kind"].get<std::string>();
    static const std::vector<std::string> kinds{"validate",  "spectrum",   "derivative-check",
                                                "branches",  "split",      "genericity",
                                                "lipschitz"};
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
        issues.push_back({"/experiment/kind", "unknown experiment kind '" + kind + "'"});
        return issues;
    }
    auto positive_number = [&](const char* field) {
        if (ex.contains(field) && (!ex[field].is_number() || ex[field].get<double>() <= 0.0))
            issues.push_back({std::string("/experiment/") + field, "must be a positive number"});
    };
    auto positive_int = [&](const char* field) {
        if (ex.contains(field) && (!ex[field].is_number_integer() || ex[field].get<int>() < 1))
            issues.push_back({std::string("/experiment/") + field, "must be an integer >= 1"});
    };
    if (kind == "validate") {
        if (doc.contains("permittivity") &&
            doc["permittivity"].value("preset", "") != "eps-identity")
            issues.push_back(
                {"/experiment/kind",
                 "validate compares against the separation-of-variables oracle and needs "
                 "eps-identity"});
    } else if (kind == "derivative-check") {
        positive_int("directions");
        positive_number("direction_norm");
        positive_int("max_targets");
    } else if (kind == "branches") {
        positive_number("t_max");
        positive_int("points");
        if (ex.contains("points") && ex["points"].is_number_integer() &&
            ex["points"].get<int>() % 2 == 0)
            issues.push_back({"/experiment/points", "must be odd so the grid contains t = 0"});
    } else if (kind == "split") {
        positive_number("t_max");
        if (ex.contains("cluster_index") &&
            (!ex["cluster_index"].is_number_integer() || ex["cluster_index"].get<int>() < 0))
            issues.push_back({"/experiment/cluster_index", "must be a nonnegative integer"});
    } else if (kind == "genericity") {
        positive_int("first_n");
        positive_number("delta");
        positive_int("budget");
    } else if (kind == "lipschitz") {
        positive_int("pairs");
        positive_number("ball_radius");
        positive_int("shrink_directions");
        positive_int("eigen_index");
        if (ex.contains("shrink_distances")) {
            if (!ex["shrink_distances"].is_array())
                issues.push_back({"/experiment/shrink_distances", "must be an array of distances"});
            else
                for (std::size_t i = 0; i < ex["shrink_distances"].size(); ++i)
                    if (!ex["shrink_distances"][i].is_number() ||
                        ex["shrink_distances"][i].get<double>() <= 0.0)
                        issues.push_back({"/experiment/shrink_distances/" + std::to_string(i),
                                          "must be a positive number"});
        }
    }
    return issues;
}

ExperimentConfig parse_config(const std::string& json_text) {
    auto issues = validate_config(json_text);
    if (!issues.empty()) throw ConfigError(std::move(issues));
    const json doc = json::parse(json_text);

    ExperimentConfig cfg;
    ojson resolved;

    ojson domain_echo;
    if (doc["domain"].contains("preset")) {
        const std::string p = doc["domain"]["preset"].get<std::string>();
        domain_preset_extent(p, cfg.extent);
        domain_echo["preset"] = p;
        domain_echo["extent"] = cfg.extent;
    } else {
        const auto& e = doc["domain"]["extent"];
        cfg.extent = {e[0].get<double>(), e[1].get<double>(), e[2].get<double>()};
        domain_echo["extent"] = cfg.extent;
    }
    resolved["domain"] = domain_echo;

    const auto& s = doc["mesh"]["subdivisions"];
    cfg.subdivisions = {s[0].get<int>(), s[1].get<int>(), s[2].get<int>()};
    resolved["mesh"] = ojson{{"subdivisions", cfg.subdivisions}};

    cfg.quadrature_degree = doc.contains("quadrature") ? doc["quadrature"]["degree"].get<int>() : 5;
    resolved["quadrature"] = ojson{{"degree", cfg.quadrature_degree}};

    std::vector<ConfigIssue> sub;
    FieldSpec fs = doc.contains("permittivity")
                       ? make_permittivity(doc["permittivity"], sub, "/permittivity")
                       : FieldSpec{PermittivityField{MatrixField::identity()}, "eps-identity",
                                   ojson{{"preset", "eps-identity"}}};
    cfg.permittivity = fs.field;
    cfg.permittivity_name = fs.name;
    resolved["permittivity"] = fs.echo;

    cfg.tau = doc["tau"].get<double>();
    resolved["tau"] = cfg.tau;
    cfg.eigen_count = doc["eigen_count"].get<int>();
    resolved["eigen_count"] = cfg.eigen_count;

    const json tols = doc.value("tolerances", json::object());
    cfg.tols.solver_tol = tols.value("solver_tol", cfg.tols.solver_tol);
    cfg.tols.cluster_tol = tols.value("cluster_tol", cfg.tols.cluster_tol);
    cfg.tols.r_max = tols.value("r_max", cfg.tols.r_max);
    cfg.tols.match_tol = tols.value("match_tol", cfg.tols.match_tol);
    cfg.tols.gap_min = tols.value("gap_min", cfg.tols.gap_min);
    resolved["tolerances"] =
        ojson{{"solver_tol", cfg.tols.solver_tol}, {"cluster_tol", cfg.tols.cluster_tol},
              {"r_max", cfg.tols.r_max},           {"match_tol", cfg.tols.match_tol},
              {"gap_min", cfg.tols.gap_min}};

    cfg.seed = doc.value("seed", std::uint64_t{0});
    resolved["seed"] = cfg.seed;

    const json& ex = doc["experiment"];
    const std::string kind = ex["kind"].get<std::string>();
    ojson exr{{"kind", kind}};
    if (kind == "validate") cfg.kind = ExperimentKind::Validate;
    if (kind == "spectrum") cfg.kind = ExperimentKind::Spectrum;
    if (kind == "derivative-check") {
        cfg.kind = ExperimentKind::DerivativeCheck;
        cfg.directions = ex.value("directions", 3);
        cfg.direction_norm = ex.value("direction_norm", 0.05);
        cfg.max_targets = ex.value("max_targets", 5);
        exr["directions"] = cfg.directions;
        exr["direction_norm"] = cfg.direction_norm;
        exr["max_targets"] = cfg.max_targets;
    }
    if (kind == "branches") {
        cfg.kind = ExperimentKind::Branches;
        cfg.t_max = ex.value("t_max", 0.05);
        cfg.t_points = ex.value("points", 9);
        exr["t_max"] = cfg.t_max;
        exr["points"] = cfg.t_points;
    }
    if (kind == "split") {
        cfg.kind = ExperimentKind::Split;
        cfg.t_max = ex.value("t_max", 0.1);
        cfg.cluster_index = ex.value("cluster_index", 0);
        exr["t_max"] = cfg.t_max;
        exr["cluster_index"] = cfg.cluster_index;
    }
    if (kind == "genericity") {
        cfg.kind = ExperimentKind::Genericity;
        cfg.first_n = ex.value("first_n", 5);
        cfg.delta = ex.value("delta", 0.1);
        cfg.budget = ex.value("budget", 8);
        exr["first_n"] = cfg.first_n;
        exr["delta"] = cfg.delta;
        exr["budget"] = cfg.budget;
    }
    if (kind == "lipschitz") {
        cfg.kind = ExperimentKind::Lipschitz;
        cfg.pairs = ex.value("pairs", 50);
        cfg.ball_radius = ex.value("ball_radius", 0.1);
        cfg.shrink_directions = ex.value("shrink_directions", 3);
        cfg.eigen_index = ex.value("eigen_index", 1);
        if (ex.contains("shrink_distances"))
            cfg.shrink_distances = ex["shrink_distances"].get<std::vector<double>>();
        exr["pairs"] = cfg.pairs;
        exr["ball_radius"] = cfg.ball_radius;
        exr["shrink_directions"] = cfg.shrink_directions;
        exr["eigen_index"] = cfg.eigen_index;
        exr["shrink_distances"] = cfg.shrink_distances;
    }
    resolved["experiment"] = exr;

    cfg.plots = doc.contains("output") && doc["output"].value("plots", false);
    resolved["output"] = ojson{{"plots", cfg.plots}};

    cfg.resolved_json = resolved.dump();
    return cfg;
}

namespace {

struct RunContext {
    geometry::Mesh mesh;
    geometry::QuadratureRule rule;

    RunContext(const ExperimentConfig& cfg)
        : mesh(geometry::build_box_mesh(cfg.extent, cfg.subdivisions)),
          rule(geometry::gauss_rule(cfg.quadrature_degree)) {}
};

ojson spectrum_summary(const Spectrum& s) {
    ojson values = ojson::array(), labels = ojson::array(), residuals = ojson::array(),
          clusters = ojson::array();
    for (int i = 0; i < s.size(); ++i) {
        const auto& e = s.entries[static_cast<std::size_t>(i)];
        values.push_back(e.sigma);
        labels.push_back(family_cell(e.label));
        residuals.push_back(e.div_residual);
        clusters.push_back(e.cluster);
    }
    return ojson{{"values", values},
                 {"labels", labels},
                 {"residuals", residuals},
                 {"clusters", clusters}};
}

void run_validate(const ExperimentConfig& cfg, RunContext& ctx, ojson& results, Report& report) {
    spectra::SpectrumTols tols = cfg.tols;
    tols.r_max = spectra::calibrate_r_max(ctx.mesh, ctx.rule, tols.solver_tol);
    const Spectrum s = spectra::maxwell_spectrum(ctx.mesh, ctx.rule, cfg.permittivity, cfg.tau,
                                                 cfg.eigen_count, tols);

    const auto expect_maxwell = analytic_maxwell(cfg.extent, 64);
    const auto expect_dirichlet = analytic_dirichlet(cfg.extent, 64);
    ojson table = ojson::array();
    std::size_t im = 0, ig = 0;
    for (int i = 0; i < s.size(); ++i) {
        const auto& e = s.entries[static_cast<std::size_t>(i)];
        double expected = std::numeric_limits<double>::quiet_NaN();
        if (e.label == Family::Maxwell && im < expect_maxwell.size())
            expected = expect_maxwell[im++];
        else if (e.label == Family::Gradient && ig < expect_dirichlet.size())
            expected = cfg.tau * expect_dirichlet[ig++];
        const double rel =
            std::isnan(expected) ? 0.0 : std::abs(e.sigma - expected) / std::max(1e-12, expected);
        table.push_back(ojson{{"index", i + 1},
                              {"sigma", e.sigma},
                              {"label", family_cell(e.label)},
                              {"expected", expected},
                              {"rel_err", rel}});
    }
    results["calibrated_r_max"] = tols.r_max;
    results["table"] = table;
    results["spectrum"] = spectrum_summary(s);
    report.files["spectrum.csv"] = spectrum_csv(s);
}

void run_spectrum(const ExperimentConfig& cfg, RunContext& ctx, ojson& results, Report& report) {
    const Spectrum s = spectra::maxwell_spectrum(ctx.mesh, ctx.rule, cfg.permittivity, cfg.tau,
                                                 cfg.eigen_count, cfg.tols);
    results["spectrum"] = spectrum_summary(s);
    results["gram_error"] = s.gram_error;
    results["dirichlet"] = s.dirichlet;
    report.files["spectrum.csv"] = spectrum_csv(s);
}

void run_derivative_check(const ExperimentConfig& cfg, RunContext& ctx, ojson& results,
                          Report& report) {
    const Spectrum s = spectra::maxwell_spectrum(ctx.mesh, ctx.rule, cfg.permittivity, cfg.tau,
                                                 cfg.eigen_count, cfg.tols);
    const auto pencil = assembly::assemble_pencil(ctx.mesh, ctx.rule, cfg.permittivity, cfg.tau);

    // target groups: clusters of the first max_targets Maxwell eigenvalues
    const auto mw = s.maxwell_indices();
    std::vector<std::vector<int>> groups;
    for (std::size_t i = 0; i < mw.size() && static_cast<int>(i) < cfg.max_targets;) {
        const int cluster = s.entries[static_cast<std::size_t>(mw[i])].cluster;
        std::vector<int> group;
        while (i < mw.size() && s.entries[static_cast<std::size_t>(mw[i])].cluster == cluster)
            group.push_back(mw[i++]);
        groups.push_back(std::move(group));
    }

    std::mt19937_64 rng(cfg.seed + 0x9e3779b9u);
    std::string csv = "F,s,value,derivative,fd,rel_err\n";
    ojson dir_report = ojson::array();
    for (int d = 0; d < cfg.directions; ++d) {
        const Sym3 raw = random_symmetric(rng);
        const PerturbationDirection eta =
            material::make_constant_direction(raw, cfg.direction_norm);
        const auto meta = assembly::reduce(assembly::assemble_mass(ctx.mesh, ctx.rule, eta.field),
                                           pencil.dof_map);

        const double t_fd = 1e-3;
        const Spectrum sp = spectra::compute_spectrum(
            ctx.mesh, ctx.rule, material::perturbed(cfg.permittivity, t_fd, eta), cfg.tau,
            cfg.eigen_count, cfg.tols);
        const Spectrum sm = spectra::compute_spectrum(
            ctx.mesh, ctx.rule, material::perturbed(cfg.permittivity, -t_fd, eta), cfg.tau,
            cfg.eigen_count, cfg.tols);

        ojson rows = ojson::array();
        for (const auto& group : groups) {
            const int m = static_cast<int>(group.size());
            double lam = 0.0;
            Eigen::MatrixXd basis(s.vectors.rows(), m);
            std::vector<double> plus, minus;
            for (int i = 0; i < m; ++i) {
                lam += s.sigma(group[static_cast<std::size_t>(i)]);
                basis.col(i) = s.vectors.col(group[static_cast<std::size_t>(i)]);
                plus.push_back(sp.sigma(group[static_cast<std::size_t>(i)]));
                minus.push_back(sm.sigma(group[static_cast<std::size_t>(i)]));
            }
            lam /= m;
            const Eigen::MatrixXd gram = spectra::eta_gram(ctx.mesh, ctx.rule, pencil, eta, basis);
            for (int deg = 1; deg <= m; ++deg) {
                std::vector<double> vals;
                for (int i = 0; i < m; ++i)
                    vals.push_back(s.sigma(group[static_cast<std::size_t>(i)]));
                const double value = spectra::symmetric_function(vals, deg);
                std::vector<spectra::ClusterBlock> blocks(1);
                blocks[0].indices = group;
                blocks[0].value = lam;
                blocks[0].eta_trace = gram.trace();
                const double deriv = spectra::symmetric_function_derivative(blocks, deg);
                const double fd = (spectra::symmetric_function(plus, deg) -
                                   spectra::symmetric_function(minus, deg)) /
                                  (2.0 * t_fd);
                const double rel = std::abs(deriv - fd) / std::max(std::abs(fd), 1e-300);
                csv += join_csv({format_cluster_range(group), std::to_string(deg),
                                 format_double(value), format_double(deriv), format_double(fd),
                                 format_double(rel)});
                rows.push_back(ojson{{"F", format_cluster_range(group)},
                                     {"s", deg},
                                     {"value", value},
                                     {"derivative", deriv},
                                     {"fd", fd},
                                     {"rel_err", rel}});
            }
        }

        // per-eigenvalue discrete pencil derivative against the same FD run
        ojson hf_rows = ojson::array();
        for (const auto& group : groups) {
            if (group.size() != 1) continue;
            const int idx = group.front();
            const double hf = spectra::discrete_eigenvalue_derivative(
                ctx.mesh, ctx.rule, pencil, cfg.permittivity, eta, s.sigma(idx),
                s.vectors.col(idx));
            const double fd = (sp.sigma(idx) - sm.sigma(idx)) / (2.0 * t_fd);
            const double paper = -s.sigma(idx) * s.vectors.col(idx).dot(meta * s.vectors.col(idx));
            hf_rows.push_back(
                ojson{{"index", idx + 1},
                      {"sigma", s.sigma(idx)},
                      {"hellmann_feynman", hf},
                      {"fd", fd},
                      {"hf_rel_err", std::abs(hf - fd) / std::max(std::abs(fd), 1e-300)},
                      {"paper_formula", paper},
                      {"paper_rel_err", std::abs(paper - fd) / std::max(std::abs(fd), 1e-300)}});
        }
        ojson values = ojson::array(), derivatives = ojson::array(), fds = ojson::array(),
              fd_errors = ojson::array();
        for (const auto& row : rows) {
            values.push_back(row["value"]);
            derivatives.push_back(row["derivative"]);
            fds.push_back(row["fd"]);
            fd_errors.push_back(row["rel_err"]);
        }
        dir_report.push_back(ojson{{"direction", d},
                                   {"entries", ojson(raw.a)},
                                   {"norm", cfg.direction_norm},
                                   {"values", values},
                                   {"derivatives", derivatives},
                                   {"fd", fds},
                                   {"fd_errors", fd_errors},
                                   {"symmetric_functions", rows},
                                   {"eigenvalue_derivatives", hf_rows}});
    }
    results["directions"] = dir_report;
    report.files["sensitivity.csv"] = csv;
}

void run_branches(const ExperimentConfig& cfg, RunContext& ctx, ojson& results, Report& report) {
    const Spectrum s = spectra::maxwell_spectrum(ctx.mesh, ctx.rule, cfg.permittivity, cfg.tau,
                                                 cfg.eigen_count, cfg.tols);
    // default window: the lowest Maxwell cluster, padded to its neighbors
    const auto mw = s.maxwell_indices();
    if (mw.empty()) throw spectra::PreconditionError("branches: no Maxwell eigenvalues in window");
    const int cluster = s.entries[static_cast<std::size_t>(mw.front())].cluster;
    const auto& members = s.clusters[static_cast<std::size_t>(cluster)];
    const double lo_val = s.sigma(members.front());
    const double hi_val = s.sigma(members.back());
    double below = 0.0, above = hi_val + 1.0;
    for (int i = 0; i < s.size(); ++i) {
        const double v = s.sigma(i);
        if (v < lo_val - 1e-12 && v > below) below = v;
        if (v > hi_val + 1e-12 && v < above) above = v;
    }
    const double window_lo = cfg.window_lo != 0.0 ? cfg.window_lo : 0.5 * (below + lo_val);
    const double window_hi = cfg.window_hi != 0.0 ? cfg.window_hi : 0.5 * (hi_val + above);

    // deterministic composite diagonal direction with distinct per-axis radii
    const material::SamplingSpec sampling{&ctx.mesh, &ctx.rule, 2};
    std::array<expr::ScalarExpr, 3> bumps;
    const std::array<double, 3> radii{0.40, 0.32, 0.25};
    for (int h = 0; h < 3; ++h) {
        expr::ScalarExpr b = expr::ScalarExpr::bump1d(
            0, 0.5 * cfg.extent[0], radii[static_cast<std::size_t>(h)] * cfg.extent[0]);
        for (int dax = 1; dax < 3; ++dax)
            b = b * expr::ScalarExpr::bump1d(dax, 0.5 * cfg.extent[static_cast<std::size_t>(dax)],
                                             radii[static_cast<std::size_t>(h)] *
                                                 cfg.extent[static_cast<std::size_t>(dax)]);
        bumps[static_cast<std::size_t>(h)] = b;
    }
    const PerturbationDirection eta = material::make_diagonal_direction(bumps, sampling);

    std::vector<double> tgrid;
    for (int i = 0; i < cfg.t_points; ++i)
        tgrid.push_back(-cfg.t_max + 2.0 * cfg.t_max * i / (cfg.t_points - 1));

    const spectra::LinearPath path{cfg.permittivity, eta};
    const auto curves = spectra::track_branches(path, tgrid, ctx.mesh, ctx.rule, cfg.tau,
                                                window_lo, window_hi, cfg.tols);

    std::string csv = "t,branch_id,value\n";
    for (Eigen::Index b = 0; b < curves.values.rows(); ++b)
        for (std::size_t i = 0; i < curves.t.size(); ++i)
            csv += join_csv({format_double(curves.t[i]), std::to_string(b),
                             format_double(curves.values(b, static_cast<Eigen::Index>(i)))});
    report.files["branches.csv"] = csv;
    if (cfg.plots) report.files["branches.svg"] = branches_svg(curves.t, curves.values);

    ojson slopes = ojson::array();
    for (Eigen::Index i = 0; i < curves.slopes_at_base.size(); ++i)
        slopes.push_back(curves.slopes_at_base(i));
    results["window"] = ojson{{"lo", window_lo}, {"hi", window_hi}};
    results["branch_count"] = curves.values.rows();
    results["slopes"] = slopes;
}

void run_split(const ExperimentConfig& cfg, RunContext& ctx, ojson& results, Report&) {
    const Spectrum s = spectra::maxwell_spectrum(ctx.mesh, ctx.rule, cfg.permittivity, cfg.tau,
                                                 cfg.eigen_count, cfg.tols);
    if (cfg.cluster_index >= static_cast<int>(s.clusters.size()))
        throw ConfigError(std::vector<ConfigIssue>{
            {"/experiment/cluster_index", "cluster index beyond the computed window"}});
    const auto res = spectra::split_cluster(ctx.mesh, ctx.rule, cfg.permittivity, cfg.tau, s,
                                            cfg.cluster_index, cfg.t_max, cfg.tols);
    ojson sub = ojson::array(), slopes = ojson::array();
    for (Eigen::Index i = 0; i < res.sub_values.size(); ++i) sub.push_back(res.sub_values(i));
    for (Eigen::Index i = 0; i < res.predicted_slopes.size(); ++i)
        slopes.push_back(res.predicted_slopes(i));
    results["candidate"] = res.candidate;
    results["t"] = res.t;
    results["sub_values"] = sub;
    results["predicted_slopes"] = slopes;
    results["min_gap"] = res.min_gap;
    results["direction"] = json::parse(res.eta.field.to_json());
}

void run_genericity(const ExperimentConfig& cfg, RunContext& ctx, ojson& results, Report&) {
    const auto res = spectra::genericity_search(ctx.mesh, ctx.rule, cfg.permittivity, cfg.first_n,
                                                cfg.delta, cfg.budget, cfg.tau, cfg.tols);
    ojson steps = ojson::array();
    for (const auto& st : res.steps)
        steps.push_back(ojson{{"cluster_size", st.cluster_size},
                              {"lambda", st.lambda},
                              {"t", st.t},
                              {"candidate", st.candidate}});
    results["success"] = res.success;
    results["simple_up_to"] = res.simple_up_to;
    results["distance_moved"] = res.distance_moved;
    results["steps"] = steps;
    results["maxwell_values"] = res.maxwell_values;
    results["gaps"] = res.gaps;
}

void run_lipschitz(const ExperimentConfig& cfg, RunContext& ctx, ojson& results, Report&) {
    std::mt19937_64 rng(cfg.seed + 0x51700000u);
    const PermittivityField id{MatrixField::identity()};
    const material::SamplingSpec sampling{&ctx.mesh, &ctx.rule, 4};
    std::uniform_real_distribution<double> unit(0.05, 1.0);

    auto random_member = [&]() {
        const Sym3 raw = random_symmetric(rng);
        const double norm = raw.max_abs_entry();
        const double d = unit(rng) * cfg.ball_radius;
        return PermittivityField{MatrixField::combination(
            MatrixField::identity(), {{d / norm, MatrixField::constant(raw)}})};
    };

    ojson pair_rows = ojson::array();
    double worst = 0.0;
    bool all_finite = true;
    for (int p = 0; p < cfg.pairs; ++p) {
        const PermittivityField e1 = random_member();
        const PermittivityField e2 = random_member();
        const double dist = material::w1inf_distance(e1.field, e2.field, sampling);
        if (!(dist > 0.0)) continue;
        const double ratio = spectra::lipschitz_ratio(ctx.mesh, ctx.rule, e1, e2, cfg.eigen_index,
                                                      cfg.tau, cfg.tols);
        all_finite = all_finite && std::isfinite(ratio);
        worst = std::max(worst, ratio);
        pair_rows.push_back(ojson{{"pair", p}, {"distance", dist}, {"ratio", ratio}});
    }

    ojson shrink_rows = ojson::array();
    double shrink_spread = 0.0;
    for (int d = 0; d < cfg.shrink_directions; ++d) {
        const Sym3 raw = random_symmetric(rng);
        const PerturbationDirection dir = material::make_constant_direction(raw, 1.0);
        double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
        ojson curve = ojson::array();
        for (double dist : cfg.shrink_distances) {
            const PermittivityField moved = material::perturbed(id, dist, dir);
            const double ratio = spectra::lipschitz_ratio(ctx.mesh, ctx.rule, id, moved,
                                                          cfg.eigen_index, cfg.tau, cfg.tols);
            rmin = std::min(rmin, ratio);
            rmax = std::max(rmax, ratio);
            curve.push_back(ojson{{"distance", dist}, {"ratio", ratio}});
        }
        const double spread = rmin > 0.0 ? rmax / rmin : std::numeric_limits<double>::infinity();
        shrink_spread = std::max(shrink_spread, spread);
        shrink_rows.push_back(ojson{{"direction", d}, {"curve", curve}, {"max_over_min", spread}});
    }

    results["pairs"] = pair_rows;
    results["all_finite"] = all_finite;
    results["max_ratio"] = worst;
    results["shrink"] = shrink_rows;
    results["shrink_max_over_min"] = shrink_spread;
}

} // namespace

Report run(const ExperimentConfig& cfg) {
    RunContext ctx(cfg);
    // admissibility gate before any assembly-heavy work
    material::audit_admissibility(cfg.permittivity, ctx.mesh, ctx.rule);

    Report report;
    ojson doc;
    doc["tool"] = "cavity-spectra";
    doc["version"] = CAVSPEC_VERSION;
    doc["experiment"] = kind_name(cfg.kind);
    doc["config"] = ojson::parse(cfg.resolved_json);
    doc["config_hash"] = content_hash(cfg.resolved_json);

    ojson results;
    switch (cfg.kind) {
    case ExperimentKind::Validate: run_validate(cfg, ctx, results, report); break;
    case ExperimentKind::Spectrum: run_spectrum(cfg, ctx, results, report); break;
    case ExperimentKind::DerivativeCheck: run_derivative_check(cfg, ctx, results, report); break;
    case ExperimentKind::Branches: run_branches(cfg, ctx, results, report); break;
    case ExperimentKind::Split: run_split(cfg, ctx, results, report); break;
    case ExperimentKind::Genericity: run_genericity(cfg, ctx, results, report); break;
    case ExperimentKind::Lipschitz: run_lipschitz(cfg, ctx, results, report); break;
    }
    doc["results"] = results;
    report.json = doc.dump(2);
    report.json += '\n';
    return report;
}

void write_report(const Report& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    auto atomic_write = [&](const std::string& name, const std::string& content) {
        const auto tmp = out_dir / (name + ".tmp");
        {
            std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
            os << content;
        }
        std::filesystem::rename(tmp, out_dir / name);
    };
    atomic_write("report.json", report.json);
    for (const auto& [name, content] : report.files) atomic_write(name, content);
}

} // namespace cavspec::lab
