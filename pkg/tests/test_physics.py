"""Physical coefficients: frozen-value oracles and structural identities."""
import numpy as np
import pytest
from scipy.integrate import quad

from rfp.physics import (PlasmaParams, advection_coeffs, chandrasekhar,
                         collision_coeffs, knock_on_kinematics,
                         knock_on_source, maxwell_juttner, moller_dsigma_dp,
                         moller_sigma_int)

# Frozen reference values computed independently with mpmath at 30 digits.
PSI_AT_1 = 0.213796647764560083
CF_REF = 12.1003372183474036       # p = 0.3, vt_hat = 0.1, Z = 1
CA_REF = 0.210552049034541631
CB_REF = 3.37546047340271835
FM_REF = 0.0269042845527692818     # maxwell_juttner(0.3), vt_hat = 0.1
MOLLER_REF = 9.52244666222964372   # dsigma/dp at gamma' = 3, gamma = 2


def test_chandrasekhar_at_one():
    assert chandrasekhar(1.0) == pytest.approx(PSI_AT_1, rel=1e-13)


def test_chandrasekhar_small_argument_series():
    x = np.array([1e-9, 1e-6, 1e-5])
    psi = chandrasekhar(x)
    series = 2.0 / np.sqrt(np.pi) * x / 3.0
    assert np.allclose(psi, series, rtol=1e-7)
    assert np.all(psi > 0)


def test_chandrasekhar_large_argument_asymptote():
    # erf saturates, so psi(x) -> 1/(2 x^2)
    assert chandrasekhar(10.0) == pytest.approx(1.0 / 200.0, rel=1e-6)


def test_chandrasekhar_bounded():
    x = np.linspace(1e-6, 50.0, 5000)
    psi = chandrasekhar(x)
    assert np.all(psi >= 0.0)
    assert psi.max() <= 0.22


def test_collision_coeffs_frozen_values():
    params = PlasmaParams(vt_hat=0.1, Z=1.0)
    c_f, c_a, c_b = collision_coeffs(0.3, params)
    assert c_f == pytest.approx(CF_REF, rel=1e-13)
    assert c_a == pytest.approx(CA_REF, rel=1e-13)
    assert c_b == pytest.approx(CB_REF, rel=1e-13)


def test_collision_coeffs_identity():
    # C_A * p / gamma = Psi(x) identically
    params = PlasmaParams(vt_hat=0.1)
    p = np.geomspace(0.3, 60.0, 40)
    gamma = np.sqrt(1.0 + p * p)
    _, c_a, _ = collision_coeffs(p, params)
    x = (p / gamma) / params.vt_hat
    assert np.allclose(c_a * p / gamma, chandrasekhar(x), rtol=1e-14)


def test_collision_coeffs_saturate_at_high_p():
    params = PlasmaParams(vt_hat=0.1)
    c_f, c_a, _ = collision_coeffs(1e4, params)
    psi_lim = chandrasekhar(1.0 / params.vt_hat)
    assert c_f == pytest.approx(2.0 / params.vt_hat**2 * psi_lim, rel=1e-6)
    assert c_a == pytest.approx(psi_lim, rel=1e-6)


def test_collision_model_variants():
    p = np.array([0.5, 2.0])
    off = PlasmaParams(collision_model="off")
    assert all(np.all(c == 0.0) for c in collision_coeffs(p, off))
    const = PlasmaParams(collision_model="constant", epsilon=0.05)
    c_f, c_a, c_b = collision_coeffs(p, const)
    assert np.all(c_f == 0.0)
    assert np.all(c_a == 0.05)
    assert np.all(c_b == 0.05)
    with pytest.raises(ValueError):
        PlasmaParams(collision_model="bogus")
    with pytest.raises(ValueError):
        collision_coeffs(np.array([0.0, 1.0]), off)


def test_advection_coeffs_frozen_value():
    params = PlasmaParams(E=0.0, alpha=0.1)
    a_p, a_xi = advection_coeffs(2.0, 0.0, params)
    assert a_p == pytest.approx(-0.1 * 2.0 * np.sqrt(5.0), rel=1e-14)
    assert a_xi == 0.0


def test_advection_vanishes_at_xi_walls():
    params = PlasmaParams(E=0.7, alpha=0.2)
    for xi in (-1.0, 1.0):
        _, a_xi = advection_coeffs(np.linspace(0.3, 60, 20), xi, params)
        assert np.all(a_xi == 0.0)


def test_advection_divergence_free_without_radiation():
    """With alpha = 0 the field (a_p, a_xi) is divergence-free in the
    p^2-weighted metric: d/dp(p^2 a_p) + p d/dxi((1-xi^2)... ) — checked by
    central differences of the analytic components."""
    params = PlasmaParams(E=0.5, alpha=0.0)
    h = 1e-6
    rng = np.random.default_rng(7)
    p = rng.uniform(0.5, 50.0, 50)
    xi = rng.uniform(-0.95, 0.95, 50)

    def div(p, xi):
        ap_plus, _ = advection_coeffs(p + h, xi, params)
        ap_minus, _ = advection_coeffs(p - h, xi, params)
        _, ax_plus = advection_coeffs(p, xi + h, params)
        _, ax_minus = advection_coeffs(p, xi - h, params)
        d_p = ((p + h) ** 2 * ap_plus - (p - h) ** 2 * ap_minus) / (2 * h)
        d_xi = p * p * (ax_plus - ax_minus) / (2 * h)
        return d_p + d_xi

    assert np.max(np.abs(div(p, xi))) < 1e-6


def test_maxwell_juttner_values():
    params = PlasmaParams(vt_hat=0.1)
    assert maxwell_juttner(0.0, params) == pytest.approx(
        1.0 / (0.1**3 * np.pi**1.5), rel=1e-14)
    assert maxwell_juttner(0.3, params) == pytest.approx(FM_REF, rel=1e-13)
    p = np.linspace(0.0, 2.0, 200)  # beyond p ~ 4 the exponential underflows
    f = maxwell_juttner(p, params)
    assert np.all(np.diff(f) < 0)


def test_knock_on_kinematics_band_and_identity():
    p = 2.0
    gamma = np.sqrt(5.0)
    lo = -np.sqrt(gamma / (gamma + 1.0))
    # at the lower band edge gamma* equals the primary-at-rest-frame limit;
    # midway inside the band the primary momentum is finite and >= p
    xi_mid = 0.5 * (lo + (-p / (gamma + 1.0)))
    p_star, in_band = knock_on_kinematics(p, xi_mid)
    assert bool(in_band)
    assert np.isfinite(p_star)
    assert float(p_star) >= p
    # xi = -1 sits below the band's lower edge -sqrt(gamma/(gamma+1))
    _, out = knock_on_kinematics(p, -1.0)
    assert not bool(out)
    _, out = knock_on_kinematics(p, -0.2)
    assert not bool(out)
    _, out = knock_on_kinematics(p, 0.5)
    assert not bool(out)


def test_knock_on_band_matches_gate_scan():
    """Band membership is equivalent to the energy gate gamma* >= 2*gamma - 1
    (brute-force scan over xi)."""
    for p in (1.0, 3.0, 10.0):
        gamma = np.sqrt(1.0 + p * p)
        xi = np.linspace(-0.9999, -1e-3, 4000)
        p_star, in_band = knock_on_kinematics(p, xi)
        a = (gamma + 1.0) / (gamma - 1.0) * xi**2
        ok = a > 1.0
        g_star = np.where(ok, (a + 1.0) / np.where(ok, a - 1.0, 1.0), np.inf)
        gate = ok & (g_star >= 2.0 * gamma - 1.0) & (g_star < np.inf)
        # the band edges are algebraically exact; allow the few grid points
        # that straddle an edge within float tolerance
        disagree = np.flatnonzero(gate != in_band)
        assert disagree.size <= 2


def test_moller_dsigma_frozen_value():
    # gamma' = 3, gamma = 2: nu = 1/2, x = 4, bracket = 56/9
    val = moller_dsigma_dp(3.0, 2.0)
    assert val == pytest.approx(MOLLER_REF, rel=1e-13)


def test_moller_dsigma_gate_and_pole_stability():
    assert moller_dsigma_dp(2.9, 2.0) == 0.0  # below gamma' = 2*gamma - 1
    # near-pole secondary energies stay finite thanks to the nu floor
    val = moller_dsigma_dp(1e4, 1.0 + 1e-12)
    assert np.isfinite(val)


def test_moller_sigma_continuity_at_threshold():
    g0 = 1.05
    assert moller_sigma_int(2.0 * g0 - 1.0, g0) == 0.0
    assert abs(moller_sigma_int(2.0 * g0 - 1.0 + 1e-9, g0)) < 1e-4
    assert moller_sigma_int(1.5, 2.0) == 0.0  # below the gate


def test_moller_sigma_matches_quadrature():
    """Closed form vs adaptive quadrature of the differential cross section
    over secondary energies in [gamma0, (gamma+1)/2]."""
    def dsigma_dgamma_sec(gsec, g):
        nu = (gsec - 1.0) / (g - 1.0)
        x = 1.0 / (nu * (1.0 - nu))
        return (2.0 * np.pi * g * g / ((g - 1.0) ** 3 * (g + 1.0))
                * (x * x - 3.0 * x + ((g - 1.0) / g) ** 2 * (1.0 + x)))

    for g, g0 in ((5.0, 1.05), (3.0, 1.2), (10.0, 2.0)):
        ref, err = quad(dsigma_dgamma_sec, g0, 0.5 * (g + 1.0), args=(g,),
                        epsabs=0.0, epsrel=1e-12)
        assert moller_sigma_int(g, g0) == pytest.approx(ref, rel=1e-8)


def test_knock_on_source_zero_for_zero_f():
    p = np.linspace(0.5, 5.0, 7)
    xi = np.linspace(-0.9, 0.9, 7)
    params = PlasmaParams(knock_on=True)
    s = knock_on_source(p, xi, np.zeros(7), lambda q: 0.0, params,
                        p_min=0.3, p_max=60.0)
    assert np.all(s == 0.0)


def test_knock_on_source_confined_to_band():
    rng = np.random.default_rng(11)
    p = rng.uniform(0.5, 20.0, 300)
    xi = rng.uniform(-1.0, 1.0, 300)
    params = PlasmaParams(knock_on=True)
    s = knock_on_source(p, xi, np.zeros(300), lambda q: 1.0, params,
                        p_min=0.3, p_max=60.0)
    gamma = np.sqrt(1.0 + p * p)
    lo = -np.sqrt(gamma / (gamma + 1.0))
    hi = -p / (gamma + 1.0)
    outside = (xi < lo) | (xi > hi)
    assert np.all(s[outside] == 0.0)


def test_knock_on_source_negative_f_clamped_in_loss():
    params = PlasmaParams(knock_on=True)
    p = np.array([5.0])
    xi = np.array([0.5])  # outside band, so only the loss term acts
    s = knock_on_source(p, xi, np.array([-1.0]), lambda q: 0.0, params,
                        p_min=0.3, p_max=60.0)
    assert s[0] == 0.0  # clamped f contributes no loss
