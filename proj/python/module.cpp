#include "cavspec/lab.hpp"
#include "cavspec/parallel.hpp"
#include "cavspec/version.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace cavspec;

namespace {

spectra::SpectrumTols tols_from_kwargs(const py::dict& kw) {
    spectra::SpectrumTols tols;
    if (kw.contains("solver_tol")) tols.solver_tol = kw["solver_tol"].cast<double>();
    if (kw.contains("cluster_tol")) tols.cluster_tol = kw["cluster_tol"].cast<double>();
    if (kw.contains("r_max")) tols.r_max = kw["r_max"].cast<double>();
    if (kw.contains("match_tol")) tols.match_tol = kw["match_tol"].cast<double>();
    if (kw.contains("gap_min")) tols.gap_min = kw["gap_min"].cast<double>();
    return tols;
}

py::dict spectrum_to_dict(const spectra::Spectrum& s) {
    py::list sigmas, labels, residuals, clusters;
    for (const auto& e : s.entries) {
        sigmas.append(e.sigma);
        labels.append(std::string(spectra::family_name(e.label)));
        residuals.append(e.div_residual);
        clusters.append(e.cluster);
    }
    py::dict d;
    d["sigma"] = sigmas;
    d["label"] = labels;
    d["div_residual"] = residuals;
    d["cluster"] = clusters;
    d["tau"] = s.tau;
    d["gram_error"] = s.gram_error;
    d["dirichlet"] = s.dirichlet;
    return d;
}

material::PermittivityField field_from_components(const py::dict& comps) {
    static const std::array<const char*, 6> keys{"11", "22", "33", "23", "13", "12"};
    std::array<expr::ScalarExpr, 6> parsed;
    parsed[0] = parsed[1] = parsed[2] = expr::ScalarExpr::constant(1.0);
    for (const auto& item : comps) {
        const std::string key = py::str(item.first);
        const auto it = std::find(keys.begin(), keys.end(), key);
        if (it == keys.end()) throw std::invalid_argument("unknown matrix entry '" + key + "'");
        parsed[static_cast<std::size_t>(it - keys.begin())] =
            expr::ScalarExpr::parse(py::str(item.second));
    }
    return material::PermittivityField{material::MatrixField::components(parsed)};
}

} // namespace

PYBIND11_MODULE(cavity_spectra, m) {
    m.doc() = "Maxwell cavity eigenvalues under variable permittivity";
    m.attr("__version__") = CAVSPEC_VERSION;

    py::class_<geometry::Mesh>(m, "Mesh")
        .def_property_readonly("node_count", &geometry::Mesh::node_count)
        .def_property_readonly("cell_count", &geometry::Mesh::cell_count)
        .def("to_json", &geometry::Mesh::to_json);

    py::class_<geometry::QuadratureRule>(m, "QuadratureRule")
        .def_property_readonly("size", &geometry::QuadratureRule::size)
        .def_readonly("degree", &geometry::QuadratureRule::degree);

    py::class_<material::PermittivityField>(m, "PermittivityField")
        .def("to_json", [](const material::PermittivityField& f) { return f.field.to_json(); });

    m.def("build_box_mesh", [](std::array<double, 3> extent, std::array<int, 3> subdivisions) {
        return geometry::build_box_mesh(extent, subdivisions);
    });
    m.def("gauss_rule", &geometry::gauss_rule, py::arg("degree") = 5);

    m.def("identity_permittivity",
          [] { return material::PermittivityField{material::MatrixField::identity()}; });
    m.def("diagonal_permittivity", [](double d1, double d2, double d3) {
        return material::PermittivityField{
            material::MatrixField::constant(material::Sym3::diagonal(d1, d2, d3))};
    });
    m.def("permittivity_from_components", &field_from_components,
          "entries keyed 11,22,33,23,13,12 as expression strings in x, y, z");

    m.def("audit_admissibility", [](const material::PermittivityField& eps,
                                    const geometry::Mesh& mesh,
                                    const geometry::QuadratureRule& rule) {
        const auto est = material::audit_admissibility(eps, mesh, rule);
        return py::make_tuple(est.c_eps, est.argmin_point);
    });

    m.def(
        "compute_spectrum",
        [](const geometry::Mesh& mesh, const geometry::QuadratureRule& rule,
           const material::PermittivityField& eps, double tau, int k, const py::kwargs& kw) {
            return spectrum_to_dict(
                spectra::maxwell_spectrum(mesh, rule, eps, tau, k, tols_from_kwargs(kw)));
        },
        py::arg("mesh"), py::arg("rule"), py::arg("eps"), py::arg("tau"), py::arg("k"));

    m.def(
        "maxwell_eigenvalues",
        [](const geometry::Mesh& mesh, const geometry::QuadratureRule& rule,
           const material::PermittivityField& eps, double tau, int k, const py::kwargs& kw) {
            return spectra::maxwell_eigenvalues(
                spectra::maxwell_spectrum(mesh, rule, eps, tau, k, tols_from_kwargs(kw)));
        },
        py::arg("mesh"), py::arg("rule"), py::arg("eps"), py::arg("tau"), py::arg("k"));

    m.def(
        "dirichlet_eigenvalues",
        [](const geometry::Mesh& mesh, const geometry::QuadratureRule& rule,
           const material::PermittivityField& eps, int k, double tol) {
            const auto sol = eigensolve::solve_dirichlet_scalar(mesh, rule, eps, k, tol);
            return std::vector<double>(sol.values.data(), sol.values.data() + sol.values.size());
        },
        py::arg("mesh"), py::arg("rule"), py::arg("eps"), py::arg("k"), py::arg("tol") = 1e-9);

    m.def(
        "solve_gsym",
        [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& m, int k, double tol) {
            const auto sol =
                eigensolve::solve_gsym(a.sparseView(), m.sparseView(), k, tol);
            return py::make_tuple(sol.values, sol.vectors, sol.residuals, sol.gram_error);
        },
        py::arg("a"), py::arg("m"), py::arg("k"), py::arg("tol") = 1e-9);

    m.def("sigma_to_mu", &eigensolve::sigma_to_mu);
    m.def("mu_to_sigma", &eigensolve::mu_to_sigma);

    m.def(
        "genericity_search",
        [](const geometry::Mesh& mesh, const geometry::QuadratureRule& rule,
           const material::PermittivityField& eps, int n, double delta, int budget, double tau,
           const py::kwargs& kw) {
            const auto res = spectra::genericity_search(mesh, rule, eps, n, delta, budget, tau,
                                                        tols_from_kwargs(kw));
            py::dict d;
            d["success"] = res.success;
            d["simple_up_to"] = res.simple_up_to;
            d["distance_moved"] = res.distance_moved;
            d["maxwell_values"] = res.maxwell_values;
            d["gaps"] = res.gaps;
            d["steps"] = res.steps.size();
            return d;
        },
        py::arg("mesh"), py::arg("rule"), py::arg("eps"), py::arg("n"), py::arg("delta"),
        py::arg("budget"), py::arg("tau"));

    m.def(
        "lipschitz_ratio",
        [](const geometry::Mesh& mesh, const geometry::QuadratureRule& rule,
           const material::PermittivityField& e1, const material::PermittivityField& e2, int j,
           double tau, const py::kwargs& kw) {
            return spectra::lipschitz_ratio(mesh, rule, e1, e2, j, tau, tols_from_kwargs(kw));
        },
        py::arg("mesh"), py::arg("rule"), py::arg("eps1"), py::arg("eps2"), py::arg("j"),
        py::arg("tau"));

    m.def(
        "run_experiment",
        [](const std::string& config_json, const std::string& out_dir) {
            const auto cfg = lab::parse_config(config_json);
            const auto report = lab::run(cfg);
            lab::write_report(report, out_dir);
            return report.json;
        },
        py::arg("config_json"), py::arg("out_dir"));

    m.def("validate_config", [](const std::string& config_json) {
        py::list issues;
        for (const auto& issue : lab::validate_config(config_json))
            issues.append(py::make_tuple(issue.pointer, issue.message));
        return issues;
    });

    m.def("set_thread_count", &cavspec::set_thread_count);

    py::register_exception<material::NotAdmissibleError>(m, "NotAdmissibleError");
    py::register_exception<eigensolve::ConvergenceError>(m, "ConvergenceError");
    py::register_exception<spectra::NeedsTauShiftError>(m, "NeedsTauShiftError");
}
