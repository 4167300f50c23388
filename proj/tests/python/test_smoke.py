"""Smoke checks for the cavity_spectra Python module."""

import json
import math
import sys
import tempfile

import cavity_spectra as cs


def approx(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    pi = math.pi
    mesh = cs.build_box_mesh((pi, pi, pi), (5, 5, 5))
    rule = cs.gauss_rule(5)
    assert mesh.node_count == 6 ** 3
    assert mesh.cell_count == 5 ** 3
    assert rule.size == 27

    eps = cs.identity_permittivity()
    c_eps, _ = cs.audit_admissibility(eps, mesh, rule)
    assert abs(c_eps - 1.0) < 1e-12

    spec = cs.compute_spectrum(mesh, rule, eps, 1.0, 8)
    assert len(spec["sigma"]) == 8
    assert all(s >= -1e-10 for s in spec["sigma"])
    assert spec["gram_error"] < 1e-10

    lam = cs.maxwell_eigenvalues(mesh, rule, eps, 1.0, 8)
    assert len(lam) >= 5
    assert approx(lam[0], 2.0, 0.05) and approx(lam[3], 3.0, 0.05)

    rho = cs.dirichlet_eigenvalues(mesh, rule, eps, 2)
    assert approx(rho[0], 3.0, 0.05)

    # simple generalized pencil with a known answer
    values, vectors, residuals, gram = cs.solve_gsym(
        [[1.0, 0.0], [0.0, 4.0]], [[1.0, 0.0], [0.0, 2.0]], 2
    )
    assert approx(values[0], 1.0, 1e-12) and approx(values[1], 2.0, 1e-12)
    assert gram < 1e-12

    assert cs.sigma_to_mu(1.0) == 0.5 and cs.mu_to_sigma(0.5) == 1.0

    anis = cs.diagonal_permittivity(1.01, 1.0, 1.0)
    ratio = cs.lipschitz_ratio(mesh, rule, eps, anis, 1, 1.0)
    assert math.isfinite(ratio) and ratio > 0.0

    config = {
        "domain": {"preset": "cube-pi"},
        "mesh": {"subdivisions": [4, 4, 4]},
        "permittivity": {"preset": "eps-identity"},
        "tau": 1.0,
        "eigen_count": 5,
        "seed": 1,
        "experiment": {"kind": "validate"},
    }
    with tempfile.TemporaryDirectory() as out:
        report = json.loads(cs.run_experiment(json.dumps(config), out))
        assert report["experiment"] == "validate"
        assert len(report["results"]["table"]) == 5

    issues = cs.validate_config(json.dumps({"domain": {"preset": "cube-pi"}}))
    assert any(ptr == "/tau" for ptr, _ in issues)

    print("python smoke: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
