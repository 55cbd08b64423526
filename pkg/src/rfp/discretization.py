"""Conservative finite-volume right-hand side on the adaptive mesh.

The solver evolves the p-weighted distribution u = p*f in flux form

    du/dt = -(1/p) d(Gp)/dp - d(Gxi)/dxi + p*S ,

with the p-flux Gp carrying field acceleration, radiation drift, collisional
friction (all upwinded) and parallel momentum diffusion, and the xi-flux
assembled as p*Gxi so that the xi divergence telescopes exactly in the
p-weighted mass.  Face fluxes are shared between neighbors; across hanging
(coarse-fine) faces the coarse-side flux is replaced by the mean of the two
fine-side fluxes, which makes the total mass conserve to round-off whenever
the domain-boundary fluxes vanish.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels, physics
from .field import PAD, BoundarySpec, GuardFillPlan
from .mesh import Coarser, Finer, QuadMesh, SameLevel
from .physics import PlasmaParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SchemeConfig:
    advection: str = "muscl"   # "muscl" | "quick"
    limiter: str = "vanleer"   # "minmod" | "vanleer" (MUSCL only)

    def __post_init__(self):
        if self.advection not in ("muscl", "quick"):
            raise ValueError(f"unknown advection scheme {self.advection!r}")
        if self.limiter not in ("minmod", "vanleer"):
            raise ValueError(f"unknown limiter {self.limiter!r}")


def advective_face_value(u_uu, u_u, u_d, scheme: SchemeConfig):
    """Scalar/array face reconstruction; upwind ordering is the caller's job."""
    s = kernels.SCHEME_QUICK if scheme.advection == "quick" else kernels.SCHEME_MUSCL
    lim = kernels.LIMITER_MINMOD if scheme.limiter == "minmod" else kernels.LIMITER_VANLEER
    fn = np.vectorize(lambda a, b, c: kernels.face_value(a, b, c, s, lim))
    out = fn(u_uu, u_u, u_d)
    return float(out) if np.ndim(out) == 0 else out


def collisional_face_flux(u_left, u_right, delta, diff_coeff):
    """Two-point central diffusive flux -D * du/dn across a face."""
    return -diff_coeff * (u_right - u_left) / delta


class KnockOnOperator:
    """Precomputed close-collision source for one (mesh, params) pair.

    The gain term needs the xi-integral of f along the vertical line p = p*
    for every receiving cell; those line integrals are a sparse matrix acting
    on the (clamped) distribution values.
    """

    def __init__(self, mesh: QuadMesh, params: PlasmaParams):
        self.mesh = mesh
        self.params = params
        n = mesh.n_leaves
        pc = np.broadcast_to(mesh.p_c[:, :, None], (n, 2, 2)).reshape(-1)
        xc = np.broadcast_to(mesh.xi_c[:, None, :], (n, 2, 2)).reshape(-1)
        self.p_cell = pc
        p_max = mesh.box.p_max
        p_min = mesh.box.p_min
        gamma = np.sqrt(1.0 + pc * pc)
        p_star, in_band = physics.knock_on_kinematics(pc, xc)
        usable = in_band & np.isfinite(p_star) & (p_star <= p_max)
        self.active = np.flatnonzero(usable)
        ps = p_star[self.active]
        gs = np.sqrt(1.0 + ps * ps)
        dcs = physics.moller_dsigma_dp(gs, gamma[self.active])
        self.prefac = (ps**4 / (pc[self.active] ** 2 * np.abs(xc[self.active]))
                       * dcs) / params.ln_lambda
        gamma0 = np.sqrt(1.0 + p_min * p_min)
        self.sigma_loss = physics.moller_sigma_int(gamma, gamma0) / params.ln_lambda

        qs, row_of = np.unique(ps, return_inverse=True)
        self.row_of = row_of
        rows, cols, vals = [], [], []
        # leaves whose p-extent contains each sample line
        p_lo, p_hi = mesh.p_lo, mesh.p_hi
        for r, q in enumerate(qs):
            hit = np.flatnonzero((p_lo <= q) & (q < p_hi))
            for l in hit:
                t = (q - mesh.p_c[l, 0]) / (mesh.p_c[l, 1] - mesh.p_c[l, 0])
                t = min(max(t, 0.0), 1.0)  # constant extension keeps positivity
                for j in range(2):
                    rows += [r, r]
                    cols += [l * 4 + 0 * 2 + j, l * 4 + 1 * 2 + j]
                    vals += [(1.0 - t) * mesh.dxi[l], t * mesh.dxi[l]]
        self.W = sp.csr_matrix((vals, (rows, cols)), shape=(len(qs), 4 * n))

    def source(self, u: np.ndarray) -> np.ndarray:
        """Contribution p*S to du/dt from the interior vector u = p*f."""
        f = np.maximum(u, 0.0) / self.p_cell
        s = -self.sigma_loss * f
        if self.active.size:
            line = self.W @ f
            s[self.active] += self.prefac * line[self.row_of]
        return self.p_cell * s


class RhsOperator:
    """du/dt evaluator bound to one mesh, parameter set, and scheme."""

    def __init__(self, mesh: QuadMesh, params: PlasmaParams,
                 scheme: SchemeConfig, bc: BoundarySpec,
                 positivity: bool | None = None):
        self.mesh = mesh
        self.params = params
        self.scheme = scheme
        self.bc = bc
        if positivity is None:
            positivity = bc.mode != "mms"
        self.plan = GuardFillPlan(mesh, bc, positivity=positivity)
        self._scheme_id = (kernels.SCHEME_QUICK if scheme.advection == "quick"
                           else kernels.SCHEME_MUSCL)
        self._limiter_id = (kernels.LIMITER_MINMOD if scheme.limiter == "minmod"
                            else kernels.LIMITER_VANLEER)
        self._coefficients()
        self._hanging_plan()
        self.knock_on = KnockOnOperator(mesh, params) if params.knock_on else None
        self.n_evals = 0

    # -- static per-mesh data -------------------------------------------

    def _coefficients(self) -> None:
        mesh, params = self.mesh, self.params
        n = mesh.n_leaves
        pf = mesh.p_f[:, :, None]                      # (N, 3, 1)
        xc = mesh.xi_c[:, None, :]                     # (N, 1, 2)
        a_p, _ = physics.advection_coeffs(pf, xc, params)
        c_f, c_a, _ = physics.collision_coeffs(pf, params)
        self.vp = np.broadcast_to(pf * a_p - (pf * c_f - c_a), (n, 3, 2)).copy()
        self.dp_diff = np.broadcast_to(pf * c_a, (n, 3, 2)).copy()

        pc = mesh.p_c[:, :, None]                      # (N, 2, 1)
        xf = mesh.xi_f[:, None, :]                     # (N, 1, 3)
        gamma_c = np.sqrt(1.0 + pc * pc)
        s2 = 1.0 - xf * xf
        _, _, c_b = physics.collision_coeffs(pc, self.params)
        self.vxi = np.broadcast_to(
            -s2 * (params.E - params.alpha * pc * xf / gamma_c), (n, 2, 3)).copy()
        self.dxi_diff = np.broadcast_to(s2 * c_b / pc, (n, 2, 3)).copy()

        # exact zero flux at the xi = +-1 walls (identified by integer coords)
        keys = mesh.keys()
        for l, (lv, gx, gy) in enumerate(keys):
            ny = mesh.n_xi << lv
            if gy == 0:
                self.vxi[l, :, 0] = 0.0
                self.dxi_diff[l, :, 0] = 0.0
            if gy == ny - 1:
                self.vxi[l, :, 2] = 0.0
                self.dxi_diff[l, :, 2] = 0.0

        # closed-domain test mode: zero p-boundary fluxes too
        self._zero_p_faces = []
        if self.bc.mode == "zeroflux":
            for l, (lv, gx, gy) in enumerate(keys):
                nx = mesh.n_p << lv
                if gx == 0:
                    self._zero_p_faces.append((l, 0))
                if gx == nx - 1:
                    self._zero_p_faces.append((l, 2))

        self.inv_dp = 1.0 / mesh.dp
        self.inv_dxi = 1.0 / mesh.dxi
        self._inv_p_dp = 1.0 / (mesh.p_c * mesh.dp[:, None])      # (N, 2)
        self._inv_p_dxi = 1.0 / (mesh.p_c * mesh.dxi[:, None])    # (N, 2)

    def _hanging_plan(self) -> None:
        """Coarse-side boundary fluxes replaced by means of fine-side fluxes."""
        mesh = self.mesh
        tp, ap, bp = [], [], []    # (target, srcA, srcB) flat indices into fp
        tx, ax, bx = [], [], []    # same for fxi
        for l in range(mesh.n_leaves):
            for side, store in (("p_lo", 0), ("p_hi", 2)):
                nb_ = mesh.face_neighbors(l, side)
                if isinstance(nb_, Finer):
                    src_face = 2 if side == "p_lo" else 0
                    for j, fine in enumerate(nb_.indices):
                        tp.append(l * 6 + store * 2 + j)
                        ap.append(fine * 6 + src_face * 2 + 0)
                        bp.append(fine * 6 + src_face * 2 + 1)
            for side, store in (("xi_lo", 0), ("xi_hi", 2)):
                nb_ = mesh.face_neighbors(l, side)
                if isinstance(nb_, Finer):
                    src_face = 2 if side == "xi_lo" else 0
                    for i, fine in enumerate(nb_.indices):
                        tx.append(l * 6 + i * 3 + store)
                        ax.append(fine * 6 + 0 * 3 + src_face)
                        bx.append(fine * 6 + 1 * 3 + src_face)
        self._hang_p = tuple(np.array(a, dtype=np.int64) for a in (tp, ap, bp))
        self._hang_xi = tuple(np.array(a, dtype=np.int64) for a in (tx, ax, bx))

    # -- evaluation ------------------------------------------------------

    def fluxes(self, t: float, u: np.ndarray):
        padded = self.plan.apply(u, t)
        n = self.mesh.n_leaves
        fp = np.empty((n, 3, 2))
        fxi = np.empty((n, 2, 3))
        kernels.flux_kernel(padded, self.vp, self.dp_diff, self.vxi,
                            self.dxi_diff, self.inv_dp, self.inv_dxi,
                            self._scheme_id, self._limiter_id, fp, fxi)
        for l, face in self._zero_p_faces:
            fp[l, face, :] = 0.0
        tgt, a, b = self._hang_p
        if tgt.size:
            flat = fp.reshape(-1)
            flat[tgt] = 0.5 * (flat[a] + flat[b])
        tgt, a, b = self._hang_xi
        if tgt.size:
            flat = fxi.reshape(-1)
            flat[tgt] = 0.5 * (flat[a] + flat[b])
        return fp, fxi

    def __call__(self, t: float, u: np.ndarray) -> np.ndarray:
        self.n_evals += 1
        fp, fxi = self.fluxes(t, u)
        dudt = (-(fp[:, 1:, :] - fp[:, :-1, :]) * self._inv_p_dp[:, :, None]
                - (fxi[:, :, 1:] - fxi[:, :, :-1]) * self._inv_p_dxi[:, :, None])
        dudt = dudt.reshape(-1)
        if self.knock_on is not None:
            dudt += self.knock_on.source(u)
        return dudt

    # -- helpers for time stepping ---------------------------------------

    def stable_dt(self, cfl: float = 0.9) -> float:
        """Forward-Euler-style stability bound for the explicit integrator."""
        mesh = self.mesh
        pmin = mesh.p_c[:, 0]
        rate = (np.abs(self.vp).max(axis=(1, 2)) / (pmin * mesh.dp)
                + np.abs(self.vxi).max(axis=(1, 2)) / (pmin * mesh.dxi)
                + 2.0 * self.dp_diff.max(axis=(1, 2)) / (pmin * mesh.dp**2)
                + 2.0 * self.dxi_diff.max(axis=(1, 2)) / (pmin * mesh.dxi**2))
        top = float(rate.max())
        if top <= 0.0:
            return np.inf
        return cfl / top

    def jacobian_diag(self) -> np.ndarray:
        """First-order estimate of diag(d(rhs)/du), for point-Jacobi use."""
        vp_r, vp_l = self.vp[:, 1:, :], self.vp[:, :-1, :]
        vx_r, vx_l = self.vxi[:, :, 1:], self.vxi[:, :, :-1]
        dp_sum = (self.dp_diff[:, 1:, :] + self.dp_diff[:, :-1, :])
        dx_sum = (self.dxi_diff[:, :, 1:] + self.dxi_diff[:, :, :-1])
        idp = self.inv_dp[:, None, None]
        idx = self.inv_dxi[:, None, None]
        d = (-(np.maximum(vp_r, 0.0) - np.minimum(vp_l, 0.0) + dp_sum * idp)
             * self._inv_p_dp[:, :, None]
             - (np.maximum(vx_r, 0.0) - np.minimum(vx_l, 0.0) + dx_sum * idx)
             * self._inv_p_dxi[:, :, None])
        d = d.reshape(-1)
        if self.knock_on is not None:
            d = d - self.knock_on.sigma_loss
        return d

    def mass(self, u: np.ndarray) -> float:
        mesh = self.mesh
        w = mesh.p_c[:, :, None] * (mesh.dp * mesh.dxi)[:, None, None]
        return float((u.reshape(mesh.n_leaves, 2, 2) * w).sum())
