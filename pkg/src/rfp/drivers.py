"""High-level run drivers: time marching, verification and AMR studies."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import diagnostics, mms, physics
from .config import RunConfig
from .discretization import RhsOperator, SchemeConfig
from .field import BoundarySpec, SolutionField
from .indicators import adapt_cycle, compute_indicators
from .integrators import (SolverError, adapt_timestep, esdirk2_step,
                          ssp_rk3_step)
from .mesh import DomainBox, QuadMesh, build_base_mesh, write_mesh_csv

logger = logging.getLogger(__name__)

STEP_COLUMNS = ["step", "t", "dt", "accepted", "error_estimate",
                "newton_iters", "gmres_iters", "n_leaves", "n_cells",
                "mass", "chi_mean", "chi_std", "chi_max"]
REGRID_COLUMNS = ["step", "t", "n_leaves_before", "n_leaves_after",
                  "refined", "coarsened", "balance_refined",
                  "clipped_refine", "clipped_coarsen"]

_BUMP_AMP = 1e-15
_BUMP_P0, _BUMP_PW2 = 40.0, 25.0
_BUMP_XI0, _BUMP_XIW2 = -0.9, 0.0025


@dataclass
class RunState:
    mesh: QuadMesh
    u: np.ndarray
    t: float
    steps: list
    regrids: list
    summary: dict


def _exact_solution(cfg: RunConfig):
    if cfg.bc_mode != "mms":
        return None
    return mms.make_solution(cfg.mms_solution, cfg.E, cfg.mms_epsilon)


def _initial_f(cfg: RunConfig, params, exact):
    if cfg.ic == "mms":
        if exact is None:
            raise ValueError("ic = mms requires bc.mode = mms")
        return lambda p, xi: exact(0.0, p, xi)
    if cfg.ic == "maxwellian":
        return lambda p, xi: physics.maxwell_juttner(p, params) * np.ones_like(xi)
    def bump(p, xi):
        return (physics.maxwell_juttner(p, params)
                + _BUMP_AMP * np.exp(-(p - _BUMP_P0) ** 2 / _BUMP_PW2)
                * np.exp(-(xi - _BUMP_XI0) ** 2 / _BUMP_XIW2))
    return bump


def _boundary(cfg: RunConfig, params, exact) -> BoundarySpec:
    if cfg.bc_mode == "mms":
        return BoundarySpec(mode="mms", exact_f=exact)
    if cfg.bc_mode == "zeroflux":
        return BoundarySpec(mode="zeroflux")
    value = cfg.p_min * physics.maxwell_juttner(cfg.p_min, params)
    return BoundarySpec(mode="physical", dirichlet=value)


def setup_mesh(cfg: RunConfig) -> QuadMesh:
    box = DomainBox(cfg.p_min, cfg.p_max, cfg.xi_min, cfg.xi_max)
    mesh = build_base_mesh(cfg.n_p, cfg.n_xi, box, cfg.min_level, cfg.max_level)
    for _ in range(cfg.min_level):
        mesh = mesh.refine_all()
    return mesh


def initial_adapt(cfg: RunConfig, mesh: QuadMesh, f_fn, params):
    """Adapt the start mesh to the initial condition, re-sampling after each pass."""
    u = SolutionField.from_f(mesh, f_fn).vector()
    for _ in range(cfg.max_level - cfg.min_level + 1):
        new_mesh, _, _, summary = adapt_cycle(
            mesh, u, params, cfg.amr, dt_pred=0.0,
            positivity=cfg.bc_mode != "mms")
        if new_mesh.keys() == mesh.keys():
            break
        mesh = new_mesh
        u = SolutionField.from_f(mesh, f_fn).vector()
    return mesh, u


def _make_operator(cfg: RunConfig, mesh, params, bc) -> RhsOperator:
    scheme = SchemeConfig(advection=cfg.advection, limiter=cfg.limiter)
    return RhsOperator(mesh, params, scheme, bc)


def run_simulation(cfg: RunConfig, output_dir: str | None = None,
                   n_pred_override: int | None = None) -> RunState:
    """March the kinetic equation from t = 0 to cfg.t_final."""
    t_start = time.perf_counter()
    params = cfg.params()
    exact = _exact_solution(cfg)
    bc = _boundary(cfg, params, exact)
    f0 = _initial_f(cfg, params, exact)
    mesh = setup_mesh(cfg)
    mesh, u = initial_adapt(cfg, mesh, f0, params)
    op = _make_operator(cfg, mesh, params, bc)
    amr = cfg.amr
    if n_pred_override is not None:
        amr = replace(amr, n_pred=n_pred_override)
    positivity = cfg.bc_mode != "mms"
    implicit = cfg.integrator == "esdirk2"

    t = 0.0
    step = 0
    dt = min(cfg.dt_init, cfg.solver.dt_max)
    steps_log, regrid_log = [], []
    rejected = newton_total = gmres_total = 0
    eps_t = 1e-12 * cfg.t_final

    while t < cfg.t_final - eps_t:
        if step > 0 and amr.n_adapt > 0 and step % amr.n_adapt == 0:
            dt_pred = amr.n_pred * dt
            n_before = mesh.n_leaves
            mesh, u, _, summary = adapt_cycle(mesh, u, params, amr,
                                              dt_pred=dt_pred,
                                              positivity=positivity)
            if mesh.n_leaves != n_before or summary.refined or summary.coarsened:
                op = _make_operator(cfg, mesh, params, bc)
            regrid_log.append([step, t, n_before, mesh.n_leaves,
                               summary.refined, summary.coarsened,
                               summary.balance_refined, summary.clipped_refine,
                               summary.clipped_coarsen])
        if implicit:
            dt_try = min(dt, cfg.t_final - t)
            rhs_diag = op.jacobian_diag() if cfg.solver.precond == "jacobi" else None
            result = esdirk2_step(op, t, u, dt_try, cfg.solver, rhs_diag)
            newton_total += result.stats.newton_iters
            gmres_total += result.stats.gmres_iters
            accepted = result.stats.converged and result.error_estimate <= cfg.solver.step_tol
            if accepted:
                u = result.u
                t += dt_try
                dt = adapt_timestep(dt_try, result.error_estimate, cfg.solver)
            else:
                rejected += 1
                if dt_try <= cfg.solver.dt_min * (1 + 1e-12):
                    raise SolverError(f"step rejected at dt_min = {cfg.solver.dt_min}"
                                      f" (t = {t:.6g})")
                dt = max(0.5 * dt_try, cfg.solver.dt_min)
            err_est = result.error_estimate
            nit, git = result.stats.newton_iters, result.stats.gmres_iters
            dt_used = dt_try
        else:
            dt_used = min(op.stable_dt(cfg.cfl), cfg.t_final - t, cfg.solver.dt_max)
            u = ssp_rk3_step(op, t, u, dt_used)
            t += dt_used
            accepted = True
            err_est = 0.0
            nit = git = 0
        step += 1
        f = u.reshape(mesh.n_leaves, 2, 2) / mesh.p_c[:, :, None]
        chi = compute_indicators(mesh, f, "ldr", amr.epsilon)
        steps_log.append([step, t, dt_used, int(accepted), err_est, nit, git,
                          mesh.n_leaves, mesh.n_cells,
                          diagnostics.total_mass(mesh, u),
                          float(chi.mean()), float(chi.std()), float(chi.max())])
        if (cfg.snapshot_every > 0 and output_dir is not None
                and step % cfg.snapshot_every == 0):
            diagnostics.write_vtk_snapshot(
                Path(output_dir) / f"snapshot_{step:06d}.vtk", mesh, u)

    wall = time.perf_counter() - t_start
    summary = {
        "t_final": t,
        "steps": step,
        "rejected_steps": rejected,
        "newton_iters": newton_total,
        "gmres_iters": gmres_total,
        "rhs_evals": op.n_evals,
        "n_leaves": mesh.n_leaves,
        "n_cells": mesh.n_cells,
        "total_mass": diagnostics.total_mass(mesh, u),
        "wall_seconds": wall,
    }
    if exact is not None:
        summary["mms_error"] = diagnostics.mms_relative_l2(mesh, u, exact, t)
    state = RunState(mesh=mesh, u=u, t=t, steps=steps_log,
                     regrids=regrid_log, summary=summary)
    if output_dir is not None:
        out = Path(output_dir)
        diagnostics.write_csv(out / "steps.csv", STEP_COLUMNS, steps_log)
        diagnostics.write_csv(out / "regrids.csv", REGRID_COLUMNS, regrid_log)
        diagnostics.write_json(out / "summary.json", summary)
        diagnostics.write_vtk_snapshot(out / "final.vtk", mesh, u)
        write_mesh_csv(mesh, out / "final_mesh.csv")
    return state


def run_mms_convergence(cfg: RunConfig, output_dir: str | None = None) -> list[dict]:
    """Manufactured-solution error over a sequence of nested level windows.

    The adaptation cadence stretches with resolution (finer setups take
    proportionally more, smaller steps between regrids).
    """
    if cfg.bc_mode != "mms":
        raise ValueError("mms study requires bc.mode = mms")
    rows = []
    for i, (lo, hi) in enumerate(cfg.level_setups()):
        sub = replace(cfg, min_level=lo, max_level=hi, ic="mms",
                      amr=replace(cfg.amr, n_adapt=cfg.amr.n_adapt << (2 * i)))
        state = run_simulation(sub)
        err = state.summary["mms_error"]
        rows.append({
            "levels": f"{lo}-{hi}",
            "n_cells": state.mesh.n_cells,
            "steps": state.summary["steps"],
            "dt_last": state.steps[-1][2] if state.steps else float("nan"),
            "error": err,
            "ratio": err / rows[-1]["error"] if rows else float("nan"),
        })
        logger.info("mms levels %d-%d: %d cells, error %.4e",
                    lo, hi, state.mesh.n_cells, err)
    if output_dir is not None:
        diagnostics.write_csv(
            Path(output_dir) / "mms_convergence.csv",
            ["levels", "n_cells", "steps", "dt_last", "error", "ratio"],
            [[r["levels"], r["n_cells"], r["steps"], r["dt_last"], r["error"],
              r["ratio"]] for r in rows])
    return rows


def _windowed_stats(state: RunState, t_start: float) -> dict:
    """dt-weighted temporal averages of indicator stats and cell counts."""
    rows = [r for r in state.steps if r[1] > t_start and r[3] == 1]
    if not rows:
        raise ValueError("no accepted steps inside averaging window")
    w = np.array([r[2] for r in rows])
    cells = np.array([r[8] for r in rows], dtype=float)
    mean_chi = np.array([r[10] for r in rows])
    std_chi = np.array([r[11] for r in rows])
    max_chi = np.array([r[12] for r in rows])
    wsum = w.sum()
    return {
        "mean_chi": float((w * mean_chi).sum() / wsum),
        "std_chi": float((w * std_chi).sum() / wsum),
        "max_chi": float((w * max_chi).sum() / wsum),
        "mean_cells": float((w * cells).sum() / wsum),
    }


def run_prediction_study(cfg: RunConfig, output_dir: str | None = None) -> list[dict]:
    """Predicted vs. unpredicted refinement at each adaptation cadence.

    For every cadence RF in the configured list, runs the same problem twice:
    once flagging on the transported (look-ahead) indicator and once on the
    instantaneous indicator, then compares windowed indicator statistics and
    mesh sizes.
    """
    rows = []
    for rf in cfg.rf_values():
        sub = replace(cfg, amr=replace(cfg.amr, n_adapt=rf, n_pred=rf))
        state_pred = run_simulation(sub)
        state_nopred = run_simulation(sub, n_pred_override=0)
        sp = _windowed_stats(state_pred, cfg.window_start)
        sn = _windowed_stats(state_nopred, cfg.window_start)
        rows.append({
            "rf": rf,
            "mean_chi_pred": sp["mean_chi"],
            "mean_chi_nopred": sn["mean_chi"],
            "std_chi_pred": sp["std_chi"],
            "std_chi_nopred": sn["std_chi"],
            "max_chi_pred": sp["max_chi"],
            "max_chi_nopred": sn["max_chi"],
            "cells_pred": sp["mean_cells"],
            "cells_nopred": sn["mean_cells"],
            "chi_ratio": sp["mean_chi"] / sn["mean_chi"],
            "cell_inflation": sp["mean_cells"] / sn["mean_cells"],
        })
        logger.info("prediction study rf=%d: chi ratio %.3f, cell inflation %.3f",
                    rf, rows[-1]["chi_ratio"], rows[-1]["cell_inflation"])
    if output_dir is not None:
        cols = list(rows[0].keys()) if rows else []
        diagnostics.write_csv(Path(output_dir) / "prediction_study.csv", cols,
                              [[r[c] for c in cols] for r in rows])
    return rows
