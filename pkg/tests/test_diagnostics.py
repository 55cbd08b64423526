"""Observables and output writers."""
import numpy as np
import pytest

from rfp import diagnostics
from rfp.field import SolutionField
from rfp.mesh import DomainBox, RefineFlag, build_base_mesh

BOX = DomainBox(0.3, 10.0)


def _hanging_mesh():
    mesh = build_base_mesh(3, 2, BOX, max_level=3).refine_all()
    flags = np.zeros(mesh.n_leaves, dtype=np.int8)
    flags[[1, 8]] = RefineFlag.REFINE
    mesh, _ = mesh.refine_and_balance(flags)
    return mesh


def test_total_mass_inverse_p_profile():
    # f = 1/p^2 means u = 1/p, so the integrand 2*pi*f*p^2 is 2*pi: the mass
    # equals 2*pi times the domain area (p_max - p_min) * 2
    mesh = _hanging_mesh()
    u = SolutionField.from_f(mesh, lambda p, xi: 1.0 / (p * p)).vector()
    expected = 2.0 * np.pi * (BOX.p_max - BOX.p_min) * 2.0
    assert diagnostics.total_mass(mesh, u) == pytest.approx(expected, rel=1e-12)
    assert diagnostics.total_mass(mesh, np.zeros(mesh.n_cells)) == 0.0


def test_xi_line_integral_constant():
    mesh = _hanging_mesh()
    u = SolutionField.from_f(mesh, lambda p, xi: np.full_like(p, 1.5)).vector()
    for p in (0.5, 2.0, 7.3, BOX.p_max):
        val = diagnostics.xi_line_integral(mesh, u, p)
        assert val == pytest.approx(1.5 * 2.0, rel=1e-12)


def test_xi_line_integral_parabola_converges():
    # f = 1 - xi^2: exact integral 4/3; midpoint rule converges as h^2
    errs = []
    for nref in (1, 2, 3):
        mesh = build_base_mesh(2, 2, BOX, max_level=4)
        for _ in range(nref):
            mesh = mesh.refine_all()
        u = SolutionField.from_f(mesh, lambda p, xi: 1.0 - xi * xi).vector()
        val = diagnostics.xi_line_integral(mesh, u, 3.0)
        errs.append(abs(val - 4.0 / 3.0))
    assert errs[1] < errs[0] and errs[2] < errs[1]
    assert errs[2] < 0.3 * errs[1]


def test_xi_line_integral_positivity_clamp():
    mesh = _hanging_mesh()
    u = SolutionField.from_f(mesh, lambda p, xi: -np.ones_like(p)).vector()
    assert diagnostics.xi_line_integral(mesh, u, 2.0) == 0.0
    assert diagnostics.xi_line_integral(
        mesh, u, 2.0, positivity=False) == pytest.approx(-2.0, rel=1e-12)


def test_xi_line_integral_domain_check():
    mesh = _hanging_mesh()
    u = np.zeros(mesh.n_cells)
    with pytest.raises(ValueError):
        diagnostics.xi_line_integral(mesh, u, BOX.p_max + 1.0)


def test_runaway_population_parity_and_sign():
    mesh = build_base_mesh(4, 8, BOX).refine_all()
    # xi-even distribution: odd weight integrates to ~0
    u = SolutionField.from_f(mesh, lambda p, xi: np.exp(-p) * (1 + xi * xi)).vector()
    assert abs(diagnostics.runaway_population(mesh, u, 2.0)) < 1e-14
    # bump at xi near -1: counter-field streaming, R < 0
    u = SolutionField.from_f(
        mesh, lambda p, xi: np.exp(-((xi + 0.9) ** 2) / 0.01)).vector()
    assert diagnostics.runaway_population(mesh, u, 2.0) < 0.0
    assert diagnostics.runaway_population(mesh, np.zeros(mesh.n_cells), 2.0) == 0.0


def test_runaway_population_matches_fine_quadrature():
    # the clipped p-interpolation is first order, so check agreement at a
    # loose tolerance and error reduction under refinement
    p0 = 4.0

    def f(p, xi):
        return np.exp(-0.2 * p) * np.exp(-((xi + 0.7) ** 2) / 0.05)

    xi = np.linspace(-1.0, 1.0, 20001)
    gamma = np.sqrt(1.0 + p0 * p0)
    ref = 2.0 * np.pi * p0**3 / gamma * np.trapezoid(f(p0, xi) * xi, xi)

    errs = []
    for nref in (2, 3):
        mesh = build_base_mesh(4, 16, BOX, max_level=4)
        for _ in range(nref):
            mesh = mesh.refine_all()
        u = SolutionField.from_f(mesh, f).vector()
        got = diagnostics.runaway_population(mesh, u, p0)
        errs.append(abs(got - ref))
    assert errs[0] < 5e-2 * abs(ref)
    assert errs[1] < 0.6 * errs[0]


def test_mms_relative_l2():
    mesh = _hanging_mesh()

    def exact(t, p, xi):
        return np.sin(p * xi) + 2.0

    u = SolutionField.from_f(mesh, lambda p, xi: exact(0.0, p, xi)).vector()
    assert diagnostics.mms_relative_l2(mesh, u, exact, 0.0) == pytest.approx(
        0.0, abs=1e-14)
    assert diagnostics.mms_relative_l2(
        mesh, 1.001 * u, exact, 0.0) == pytest.approx(1e-3, rel=1e-10)
    with pytest.raises(ValueError):
        diagnostics.mms_relative_l2(
            mesh, u, lambda t, p, xi: np.zeros_like(p), 0.0)


def test_write_csv_roundtrip(tmp_path):
    path = tmp_path / "rows.csv"
    rows = [[1, 0.1234567890123456789, "tag"], [2, 1e-300, "x"]]
    diagnostics.write_csv(path, ["a", "b", "c"], rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "a,b,c"
    parsed = lines[1].split(",")
    assert float(parsed[1]) == rows[0][1]  # full precision round-trip


def test_write_json(tmp_path):
    import json
    path = tmp_path / "sub" / "summary.json"
    diagnostics.write_json(path, {"steps": 7, "mass": 1.5})
    assert json.loads(path.read_text()) == {"steps": 7, "mass": 1.5}


def test_write_vtk_snapshot(tmp_path):
    mesh = _hanging_mesh()
    u = SolutionField.from_f(mesh, lambda p, xi: np.exp(-p)).vector()
    path = tmp_path / "snap.vtk"
    diagnostics.write_vtk_snapshot(path, mesh, u)
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert f"CELLS {mesh.n_cells} {5 * mesh.n_cells}" in text
    for name in ("SCALARS u double", "SCALARS f double", "SCALARS level int"):
        assert name in text
    # every cell quad has 4 points
    assert f"POINTS {16 * mesh.n_leaves} double" in text
