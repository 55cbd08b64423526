"""Guard-layer filling and conservative transfer between meshes."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfp.field import (BoundarySpec, GuardFillPlan, SolutionField,
                       discrete_mass, fill_guard_layers, transfer_on_adapt)
from rfp.mesh import DomainBox, RefineFlag, build_base_mesh

BOX = DomainBox(0.3, 10.0)


def _hanging_mesh():
    mesh = build_base_mesh(3, 2, BOX, max_level=4).refine_all()
    flags = np.zeros(mesh.n_leaves, dtype=np.int8)
    flags[[2, 9, 17]] = RefineFlag.REFINE
    mesh, _ = mesh.refine_and_balance(flags)
    return mesh


def test_boundary_spec_validation():
    with pytest.raises(ValueError):
        BoundarySpec(mode="unknown")
    with pytest.raises(ValueError):
        BoundarySpec(mode="mms")  # needs exact_f


def test_solution_field_from_f_roundtrip():
    mesh = build_base_mesh(3, 2, BOX)
    fld = SolutionField.from_f(mesh, lambda p, xi: 1.0 / (p * p))
    # conserved variable is p*f = 1/p at cell centers
    assert np.allclose(fld.interior, 1.0 / mesh.p_c[:, :, None])
    assert np.allclose(fld.f_values(), 1.0 / mesh.p_c[:, :, None] ** 2)
    u = fld.vector()
    fld2 = SolutionField(mesh)
    fld2.set_vector(u)
    assert np.array_equal(fld2.interior, fld.interior)


def test_guard_fill_constant_zeroflux():
    mesh = _hanging_mesh()
    u = np.full(mesh.n_cells, 3.25)
    padded = fill_guard_layers(mesh, u, BoundarySpec(mode="zeroflux"))
    assert np.allclose(padded, 3.25, atol=0.0)


def test_guard_fill_linear_exact_interior():
    """Same-level, coarse->fine, fine->coarse guards all reproduce a linear
    field to round-off; only domain-boundary guards may deviate."""
    mesh = _hanging_mesh()
    a, b, c = 0.7, -0.3, 0.1

    def lin(p, xi):
        return a * p + b * xi + c

    fld = SolutionField(mesh)
    fld.interior[...] = lin(mesh.p_c[:, :, None], mesh.xi_c[:, None, :])
    padded = fill_guard_layers(mesh, fld.vector(), BoundarySpec(mode="zeroflux"))

    for l in range(mesh.n_leaves):
        lv, gx, gy = mesh.keys()[l]
        nx, ny = mesh.extent(lv + 1)
        for i in range(6):
            for j in range(6):
                fx, fy = 2 * gx - 2 + i, 2 * gy - 2 + j
                if not (0 <= fx < nx and 0 <= fy < ny):
                    continue  # domain-boundary guard, different rule
                pg = mesh.p_lo[l] + (i - 2 + 0.5) * mesh.dp[l]
                xg = mesh.xi_lo[l] + (j - 2 + 0.5) * mesh.dxi[l]
                assert padded[l, i, j] == pytest.approx(lin(pg, xg), abs=1e-12)


def test_guard_fill_dirichlet_face_value():
    """Physical p_min ghosts average with the interior to the Dirichlet value."""
    mesh = build_base_mesh(2, 1, BOX)
    value = 0.8
    u = np.full(mesh.n_cells, 0.2)
    padded = fill_guard_layers(mesh, u, BoundarySpec(mode="physical",
                                                     dirichlet=value))
    left = int(np.argmin(mesh.p_lo))
    for j in (2, 3):
        face = 0.5 * (padded[left, 1, j] + padded[left, 2, j])
        assert face == pytest.approx(value, abs=1e-14)


def test_guard_fill_pmax_mirror():
    mesh = build_base_mesh(2, 1, BOX)
    rng = np.random.default_rng(0)
    u = rng.uniform(0.1, 1.0, mesh.n_cells)
    padded = fill_guard_layers(mesh, u, BoundarySpec(mode="physical",
                                                     dirichlet=0.5))
    right = int(np.argmax(mesh.p_lo))
    for j in (2, 3):
        assert padded[right, 4, j] == pytest.approx(padded[right, 3, j])
        assert padded[right, 5, j] == pytest.approx(padded[right, 2, j])


def test_guard_fill_xi_reflection():
    mesh = build_base_mesh(2, 1, BOX)
    rng = np.random.default_rng(1)
    u = rng.uniform(0.1, 1.0, mesh.n_cells)
    padded = fill_guard_layers(mesh, u, BoundarySpec(mode="zeroflux"))
    for l in range(mesh.n_leaves):
        for i in (2, 3):
            assert padded[l, i, 1] == pytest.approx(padded[l, i, 2])
            assert padded[l, i, 0] == pytest.approx(padded[l, i, 3])
            assert padded[l, i, 4] == pytest.approx(padded[l, i, 3])
            assert padded[l, i, 5] == pytest.approx(padded[l, i, 2])


def test_guard_fill_mms_exact_values():
    mesh = build_base_mesh(2, 1, BOX)

    def exact_f(t, p, xi):
        return (1.0 + t) * p + xi

    bc = BoundarySpec(mode="mms", exact_f=exact_f)
    u = np.zeros(mesh.n_cells)
    t = 0.7
    padded = fill_guard_layers(mesh, u, bc, t=t, positivity=False)
    left = int(np.argmin(mesh.p_lo))
    for i in (0, 1):
        for j in (2, 3):
            pg = mesh.p_lo[left] + (i - 2 + 0.5) * mesh.dp[left]
            xg = mesh.xi_lo[left] + (j - 2 + 0.5) * mesh.dxi[left]
            assert padded[left, i, j] == pytest.approx(pg * exact_f(t, pg, xg))


def test_guard_fill_positivity_clamp_preserves_strip_mass():
    """A sign-changing coarse neighbor produces negative interpolants; with
    positivity on they are clamped and the interpolated strip keeps its
    p-weighted mass."""
    mesh = _hanging_mesh()
    rng = np.random.default_rng(2)
    u = rng.uniform(-1.0, 1.0, mesh.n_cells)
    plan = GuardFillPlan(mesh, BoundarySpec(mode="zeroflux"), positivity=True)
    padded = plan.apply(u)
    assert plan.grp_pos.size > 0
    raw = (plan.G @ u)[plan.grp_pos]
    clamped = padded.reshape(-1)[plan.grp_pos]
    assert clamped.min() >= 0.0
    m_raw = np.add.reduceat(plan.grp_w * raw, plan.grp_ptr[:-1])
    m_cl = np.add.reduceat(plan.grp_w * clamped, plan.grp_ptr[:-1])
    keep = m_raw > 0.0  # groups with positive mass must be restored exactly
    assert np.allclose(m_cl[keep], m_raw[keep], rtol=1e-12)


def test_guard_fill_plan_matches_one_shot():
    mesh = _hanging_mesh()
    rng = np.random.default_rng(3)
    u = rng.uniform(0.1, 2.0, mesh.n_cells)
    bc = BoundarySpec(mode="zeroflux")
    plan = GuardFillPlan(mesh, bc)
    assert np.array_equal(plan.apply(u), fill_guard_layers(mesh, u, bc))


def test_transfer_identity():
    mesh = _hanging_mesh()
    rng = np.random.default_rng(4)
    u = rng.uniform(0.1, 2.0, mesh.n_cells)
    out = transfer_on_adapt(mesh, mesh, u)
    assert np.array_equal(out, u)


def test_transfer_constant_preserved():
    mesh = build_base_mesh(2, 2, BOX, max_level=2).refine_all()
    fine = mesh.refine_all()
    u = np.full(mesh.n_cells, 1.7)
    out = transfer_on_adapt(mesh, fine, u)
    assert np.allclose(out, 1.7, atol=0.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_transfer_refine_conserves_mass(seed):
    mesh = build_base_mesh(2, 2, BOX, max_level=3).refine_all()
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.05, 2.0, mesh.n_cells)
    fine = mesh.refine_all()
    out = transfer_on_adapt(mesh, fine, u)
    m0 = discrete_mass(mesh, u)
    m1 = discrete_mass(fine, out)
    assert m1 == pytest.approx(m0, rel=1e-12)
    assert out.min() >= 0.0


def test_transfer_coarsen_conserves_mass():
    fine = build_base_mesh(2, 2, BOX, max_level=2).refine_all().refine_all()
    rng = np.random.default_rng(5)
    u = rng.uniform(0.05, 2.0, fine.n_cells)
    coarse, _ = fine.refine_and_balance(
        np.full(fine.n_leaves, RefineFlag.COARSEN, dtype=np.int8))
    assert coarse.n_leaves < fine.n_leaves
    out = transfer_on_adapt(fine, coarse, u)
    assert discrete_mass(coarse, out) == pytest.approx(
        discrete_mass(fine, u), rel=1e-12)


def test_transfer_positivity_near_zero_region():
    mesh = build_base_mesh(2, 1, BOX, max_level=2)
    # steep linear drop: bilinear extrapolation to child centers goes negative
    fld = SolutionField(mesh)
    fld.interior[...] = np.maximum(
        1.0 - 0.4 * (mesh.p_c[:, :, None] - 0.3), 1e-6)
    fld.interior[:, 1, :] = 1e-6
    u = fld.vector()
    fine = mesh.refine_all()
    out = transfer_on_adapt(mesh, fine, u, positivity=True)
    assert out.min() >= 0.0
    assert discrete_mass(fine, out) == pytest.approx(
        discrete_mass(mesh, u), rel=1e-12)
