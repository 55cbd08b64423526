"""Time integrators: explicit SSP-RK3 and an L-stable ESDIRK2 with JFNK stages.

The implicit stages are solved by Newton iteration with Jacobian-free
matrix-vector products (finite-difference directional derivatives) and a
restarted GMRES (modified Gram-Schmidt) linear solver, optionally
right-preconditioned by a point-Jacobi diagonal estimate.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

# second-order, stiffly accurate, L-stable trapezoidal/BDF2-type ESDIRK
GAMMA = 1.0 - 1.0 / math.sqrt(2.0)
_B1 = _B2 = math.sqrt(2.0) / 4.0
_BHAT = 1.0 / 3.0


class SolverError(RuntimeError):
    """Linear or nonlinear solver failed to make progress."""


@dataclass
class SolverConfig:
    newton_rtol: float = 1e-6
    newton_atol: float = 1e-12
    newton_max_iter: int = 25
    gmres_rtol: float = 1e-4
    gmres_atol: float = 1e-30
    gmres_restart: int = 30
    gmres_max_restarts: int = 20
    jfnk_scale: float = math.sqrt(np.finfo(float).eps)
    step_tol: float = 1.0
    step_atol: float = 1e-9
    step_rtol: float = 1e-3
    step_safety: float = 0.9
    dt_min: float = 1e-10
    dt_max: float = 1.0
    precond: str = "none"   # "none" | "jacobi"


@dataclass
class StepStats:
    newton_iters: int = 0
    gmres_iters: int = 0
    converged: bool = True


@dataclass
class StepResult:
    u: np.ndarray
    error_estimate: float = 0.0
    stats: StepStats = field(default_factory=StepStats)


def ssp_rk3_step(rhs, t: float, u: np.ndarray, dt: float) -> np.ndarray:
    """Third-order strong-stability-preserving Runge-Kutta (Shu-Osher form)."""
    u1 = u + dt * rhs(t, u)
    u2 = 0.75 * u + 0.25 * (u1 + dt * rhs(t + dt, u1))
    return (u + 2.0 * (u2 + dt * rhs(t + 0.5 * dt, u2))) / 3.0


def gmres(matvec, b: np.ndarray, x0: np.ndarray | None = None, *,
          rtol: float = 1e-6, atol: float = 0.0, restart: int = 30,
          max_restarts: int = 20, precond=None) -> tuple[np.ndarray, int]:
    """Restarted GMRES with modified Gram-Schmidt; returns (x, iterations).

    ``precond`` is an optional right preconditioner callable v -> M^{-1} v.
    Raises SolverError if the residual stagnates over three restart cycles.
    """
    n = b.size
    x = np.zeros(n) if x0 is None else x0.copy()
    bnorm = np.linalg.norm(b)
    target = max(rtol * bnorm, atol)
    if bnorm == 0.0:
        return x, 0
    total_iters = 0
    stagnant = 0
    prev_res = np.inf
    for _ in range(max_restarts):
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        if beta <= target:
            return x, total_iters
        m = restart
        V = np.empty((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        V[0] = r / beta
        g[0] = beta
        cols = 0
        for k in range(m):
            z = precond(V[k]) if precond is not None else V[k]
            # copy: the operator may return (an alias of) its input
            w = np.array(matvec(z), dtype=float)
            for i in range(k + 1):
                H[i, k] = w @ V[i]
                w -= H[i, k] * V[i]
            H[k + 1, k] = np.linalg.norm(w)
            happy = H[k + 1, k] == 0.0
            if not happy:
                V[k + 1] = w / H[k + 1, k]
            # apply stored Givens rotations, then a new one
            for i in range(k):
                hi = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = hi
            denom = math.hypot(H[k, k], H[k + 1, k])
            if denom == 0.0:
                # zero column: the operator is singular on this direction,
                # so drop it from the least-squares solve
                total_iters += 1
                break
            cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            total_iters += 1
            cols = k + 1
            if happy or abs(g[k + 1]) <= target:
                break
        kk = cols
        if kk == 0:
            raise SolverError("GMRES breakdown: operator annihilates the residual")
        y = np.zeros(kk)
        for i in range(kk - 1, -1, -1):
            y[i] = (g[i] - H[i, i + 1:kk] @ y[i + 1:kk]) / H[i, i]
        dx = V[:kk].T @ y
        if precond is not None:
            dx = precond(dx)
        x = x + dx
        res = abs(g[kk]) if kk < m + 1 else np.linalg.norm(b - matvec(x))
        if res <= target:
            return x, total_iters
        if res >= 0.999 * prev_res:
            stagnant += 1
            if stagnant >= 3:
                raise SolverError(f"GMRES stagnated at residual {res:.3e} "
                                  f"(target {target:.3e})")
        else:
            stagnant = 0
        prev_res = res
    raise SolverError(f"GMRES did not converge within {max_restarts} restarts")


def newton_krylov(residual, u0: np.ndarray, cfg: SolverConfig,
                  precond_diag: np.ndarray | None = None) -> tuple[np.ndarray, StepStats]:
    """Inexact Newton with Jacobian-free finite-difference products."""
    u = u0.copy()
    stats = StepStats()
    f = residual(u)
    norm0 = np.linalg.norm(f)
    target = cfg.newton_atol + cfg.newton_rtol * norm0
    precond = None
    if precond_diag is not None:
        inv = 1.0 / precond_diag
        precond = lambda v: inv * v
    while np.linalg.norm(f) > target:
        if stats.newton_iters >= cfg.newton_max_iter:
            stats.converged = False
            return u, stats
        unorm = np.linalg.norm(u)

        def jv(v, _u=u, _f=f, _unorm=unorm):
            vnorm = np.linalg.norm(v)
            if vnorm == 0.0:
                return np.zeros_like(v)
            sigma = cfg.jfnk_scale * (1.0 + _unorm) / vnorm
            return (residual(_u + sigma * v) - _f) / sigma

        try:
            du, its = gmres(jv, -f, rtol=cfg.gmres_rtol, atol=cfg.gmres_atol,
                            restart=cfg.gmres_restart,
                            max_restarts=cfg.gmres_max_restarts, precond=precond)
        except SolverError as err:
            logger.debug("newton: linear solve failed: %s", err)
            stats.converged = False
            return u, stats
        stats.gmres_iters += its
        u = u + du
        f = residual(u)
        stats.newton_iters += 1
    return u, stats


def esdirk2_step(rhs, t: float, u: np.ndarray, dt: float, cfg: SolverConfig,
                 rhs_diag: np.ndarray | None = None) -> StepResult:
    """One step of the stiffly accurate two-stage-implicit ESDIRK scheme.

    Explicit first stage, implicit stages at c = (2*gamma, 1) with diagonal
    gamma = 1 - 1/sqrt(2); the result is second order and L-stable.  The
    embedded first-order companion provides ``error_estimate`` as a weighted
    RMS norm against (step_atol + step_rtol * |u|).
    """
    stats = StepStats()
    pdiag = None
    if cfg.precond == "jacobi" and rhs_diag is not None:
        pdiag = 1.0 - dt * GAMMA * rhs_diag
    k1 = rhs(t, u)

    base2 = u + dt * GAMMA * k1

    def res2(v):
        return v - base2 - dt * GAMMA * rhs(t + 2.0 * GAMMA * dt, v)

    u2, s = newton_krylov(res2, u + 2.0 * GAMMA * dt * k1, cfg, pdiag)
    stats.newton_iters += s.newton_iters
    stats.gmres_iters += s.gmres_iters
    if not s.converged:
        stats.converged = False
        return StepResult(u, np.inf, stats)
    k2 = (u2 - base2) / (dt * GAMMA)

    base3 = u + dt * (_B1 * k1 + _B2 * k2)

    def res3(v):
        return v - base3 - dt * GAMMA * rhs(t + dt, v)

    u3, s = newton_krylov(res3, u2, cfg, pdiag)
    stats.newton_iters += s.newton_iters
    stats.gmres_iters += s.gmres_iters
    if not s.converged:
        stats.converged = False
        return StepResult(u, np.inf, stats)
    k3 = (u3 - base3) / (dt * GAMMA)

    err_vec = dt * ((_B1 - _BHAT) * k1 + (_B2 - _BHAT) * k2 + (GAMMA - _BHAT) * k3)
    wt = cfg.step_atol + cfg.step_rtol * np.abs(u3)
    err = float(np.sqrt(np.mean((err_vec / wt) ** 2)))
    return StepResult(u3, err, stats)


def adapt_timestep(dt: float, error_estimate: float, cfg: SolverConfig) -> float:
    """PI-free elementary controller: dt * safety * sqrt(tol/err), clamped."""
    if error_estimate <= 0.0:
        return cfg.dt_max
    try:
        fac = cfg.step_safety * math.sqrt(cfg.step_tol / error_estimate)
    except (OverflowError, ZeroDivisionError):
        fac = 10.0
    fac = min(max(fac, 0.1), 10.0)
    return min(max(dt * fac, cfg.dt_min), cfg.dt_max)
