"""Physical coefficients for the relativistic electron kinetic equation.

Momenta are normalized to m_e*c, time to the relativistic collision time, and
the electric field to the critical (avalanche threshold) field.  All functions
are elementwise over numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import erf

__all__ = [
    "PlasmaParams", "chandrasekhar", "collision_coeffs", "advection_coeffs",
    "maxwell_juttner", "knock_on_kinematics", "moller_dsigma_dp",
    "moller_sigma_int", "knock_on_source",
]

_TWO_OVER_SQRT_PI = 2.0 / np.sqrt(np.pi)

# Below this argument the Chandrasekhar function is evaluated by its leading
# series term to avoid catastrophic cancellation.
_PSI_SERIES_CUTOFF = 1e-4


@dataclass(frozen=True)
class PlasmaParams:
    """Background plasma and field parameters.

    vt_hat is the thermal momentum spread (normalized thermal velocity),
    E the parallel electric field, alpha the synchrotron radiation strength,
    Z the effective ion charge, and ln_lambda the Coulomb logarithm used by
    the secondary-generation (knock-on) source.  ``collision_model`` selects
    the full test-particle coefficients ("full"), a constant-coefficient
    diffusion with C_F = 0 and C_A = C_B = epsilon ("constant"), or no
    collisions at all ("off").
    """

    E: float = 0.0
    alpha: float = 0.0
    vt_hat: float = 0.1
    Z: float = 1.0
    ln_lambda: float = 15.0
    knock_on: bool = False
    collision_model: str = "full"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.vt_hat <= 0:
            raise ValueError("vt_hat must be positive")
        if self.collision_model not in ("full", "constant", "off"):
            raise ValueError(f"unknown collision model {self.collision_model!r}")
        if self.ln_lambda <= 0:
            raise ValueError("ln_lambda must be positive")

    def with_(self, **kw) -> "PlasmaParams":
        return replace(self, **kw)


def chandrasekhar(x):
    """Chandrasekhar function psi(x) = [erf(x) - x erf'(x)] / (2 x^2)."""
    x = np.asarray(x, dtype=float)
    small = x < _PSI_SERIES_CUTOFF
    xs = np.where(small, 1.0, x)
    core = (erf(xs) - xs * _TWO_OVER_SQRT_PI * np.exp(-xs * xs)) / (2.0 * xs * xs)
    series = _TWO_OVER_SQRT_PI * x / 3.0
    out = np.where(small, series, core)
    return out if out.ndim else float(out)


def collision_coeffs(p, params: PlasmaParams):
    """Test-particle collision coefficients (C_F, C_A, C_B) at momentum p.

    C_F is the slowing-down friction, C_A the parallel momentum diffusion,
    and C_B the pitch-angle scattering coefficient.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("momentum must be positive")
    if params.collision_model == "off":
        z = np.zeros_like(p)
        return z, z.copy(), z.copy()
    if params.collision_model == "constant":
        e = np.full_like(p, params.epsilon)
        return np.zeros_like(p), e, e.copy()
    vt = params.vt_hat
    gamma = np.sqrt(1.0 + p * p)
    x = (p / gamma) / vt
    psi = chandrasekhar(x)
    c_f = (2.0 / vt**2) * psi
    c_a = (gamma / p) * psi
    c_b = (gamma / (2.0 * p)) * (params.Z + erf(x) - psi
                                 + 0.5 * vt**2 * p * p / (gamma * gamma))
    return c_f, c_a, c_b


def advection_coeffs(p, xi, params: PlasmaParams):
    """Collisionless phase-space drift velocities (a_p, a_xi).

    These combine electric-field acceleration with the synchrotron
    radiation-reaction drift; they drive both the main discretization and the
    refinement-indicator transport model.
    """
    p = np.asarray(p, dtype=float)
    xi = np.asarray(xi, dtype=float)
    gamma = np.sqrt(1.0 + p * p)
    s2 = 1.0 - xi * xi
    a_p = -(params.E * xi + params.alpha * p * gamma * s2)
    a_xi = -s2 * (params.E / p - params.alpha * xi / gamma)
    return a_p, a_xi


def maxwell_juttner(p, params: PlasmaParams):
    """Relativistic thermal equilibrium distribution at momentum p."""
    p = np.asarray(p, dtype=float)
    vt = params.vt_hat
    gamma = np.sqrt(1.0 + p * p)
    norm = 1.0 / (vt**3 * np.pi**1.5)
    out = norm * np.exp((1.0 - gamma) / (0.5 * vt**2))
    return out if out.ndim else float(out)


# ----------------------------------------------------------------------
# close-collision (knock-on) secondary generation


def knock_on_kinematics(p, xi):
    """Primary momentum p* feeding secondaries at (p, xi), and band membership.

    A secondary at (p, xi) can only be produced by primaries moving parallel
    to the field, which pins the primary energy gamma* through the collision
    kinematics.  Returns (p_star, in_band); outside the kinematic band
    xi in [-sqrt(gamma/(gamma+1)), -p/(gamma+1)] the pair is (nan, False).
    """
    p = np.asarray(p, dtype=float)
    xi = np.asarray(xi, dtype=float)
    gamma = np.sqrt(1.0 + p * p)
    lo = -np.sqrt(gamma / (gamma + 1.0))
    hi = -p / (gamma + 1.0)
    in_band = (xi >= lo) & (xi <= hi)
    a = (gamma + 1.0) / (gamma - 1.0) * xi * xi
    denom = a - 1.0
    safe = denom > 0
    gamma_star = np.where(safe & in_band, (a + 1.0) / np.where(safe, denom, 1.0), np.nan)
    p_star = np.sqrt(np.maximum(gamma_star * gamma_star - 1.0, 0.0))
    p_star = np.where(in_band, p_star, np.nan)
    return p_star, in_band


def moller_dsigma_dp(gamma_prime, gamma, nu_floor: float = 1e-8):
    """Moller differential cross section d(sigma)/dp for secondary energy gamma.

    ``gamma_prime`` is the primary energy.  The cross section is gated to the
    regime gamma_prime >= 2*gamma - 1 (the secondary is, by convention, the
    slower outgoing electron); outside the gate it is zero.  The energy
    transfer fraction nu is floored away from its poles at 0 and 1.
    """
    gp = np.asarray(gamma_prime, dtype=float)
    g = np.asarray(gamma, dtype=float)
    gate = gp >= 2.0 * g - 1.0
    nu = (g - 1.0) / np.where(gp > 1.0, gp - 1.0, np.inf)
    nu = np.clip(nu, nu_floor, 1.0 - nu_floor)
    x = 1.0 / (nu * (1.0 - nu))
    p = np.sqrt(np.maximum(g * g - 1.0, 0.0))
    pref = (p / g) * 2.0 * np.pi * gp * gp / ((gp - 1.0) ** 3 * (gp + 1.0))
    bracket = x * x - 3.0 * x + ((gp - 1.0) / gp) ** 2 * (1.0 + x)
    out = np.where(gate, pref * bracket, 0.0)
    return out if out.ndim else float(out)


def moller_sigma_int(gamma, gamma0):
    """Total cross section for a primary at gamma to create secondaries above gamma0.

    Closed form of the integral of the differential cross section over
    secondary energies in [gamma0, (gamma+1)/2]; zero unless
    gamma >= 2*gamma0 - 1.
    """
    g = np.asarray(gamma, dtype=float)
    g0 = np.asarray(gamma0, dtype=float)
    gate = g >= 2.0 * g0 - 1.0
    gs = np.where(gate, g, 2.0 * g0 - 1.0 + 1e-300)  # keep logs finite off-gate
    term = (0.5 * (gs + 1.0) - g0
            - gs * gs * (1.0 / (gs - g0) - 1.0 / (g0 - 1.0))
            + (2.0 * gs - 1.0) / (gs - 1.0) * np.log((g0 - 1.0) / (gs - g0)))
    out = np.where(gate, 2.0 * np.pi / (gs * gs - 1.0) * term, 0.0)
    return out if out.ndim else float(out)


def knock_on_source(p, xi, f_here, line_integral_of_f, params: PlasmaParams,
                    p_min: float, p_max: float):
    """Secondary-generation source S(p, xi) for the distribution f.

    ``f_here`` is f at the evaluation points (used by the loss term) and
    ``line_integral_of_f`` a callable q -> integral of f(q, xi') over xi'.
    ``p_min`` sets the low-energy cutoff gamma0 below which secondaries are
    not tracked; primaries leaving the domain above ``p_max`` contribute
    nothing.  Gain and loss are kept together so sign conventions stay local.
    """
    p = np.asarray(p, dtype=float)
    xi = np.asarray(xi, dtype=float)
    f_here = np.asarray(f_here, dtype=float)
    gamma = np.sqrt(1.0 + p * p)
    gamma0 = np.sqrt(1.0 + p_min * p_min)
    p_star, in_band = knock_on_kinematics(p, xi)
    usable = in_band & np.isfinite(p_star) & (p_star <= p_max)
    gain = np.zeros_like(f_here)
    if np.any(usable):
        ps = p_star[usable]
        gs = np.sqrt(1.0 + ps * ps)
        dcs = moller_dsigma_dp(gs, gamma[usable])
        fline = np.array([line_integral_of_f(q) for q in np.atleast_1d(ps)])
        gain[usable] = (ps**4 / (p[usable] ** 2 * np.abs(xi[usable]))
                        * dcs * fline) / params.ln_lambda
    loss = -moller_sigma_int(gamma, gamma0) / params.ln_lambda * np.maximum(f_here, 0.0)
    return gain + loss
