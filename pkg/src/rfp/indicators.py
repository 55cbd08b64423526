"""Feature indicators for refinement, and their predictive transport.

Each leaf gets one scalar indicator computed from its four interior
distribution values: the relative-jump indicator ("gs"), the log-jump
indicator ("lgs"), or the log-dynamic-range indicator ("ldr").  For strictly
positive data the last two are identical; "ldr" is the cheap default.

Because refinement happens only every ``n_adapt`` steps, a feature moving
faster than one cell width per adaptation window escapes its refined patch.
``predict_indicators`` guards against that by transporting the indicator
field with the collisionless drift velocities (first-order donor-cell,
forward Euler substeps) over the upcoming window and keeping the running
maximum, so cells about to be visited by a feature are flagged early.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import physics
from .field import transfer_on_adapt
from .mesh import Boundary, Coarser, Finer, QuadMesh, RefineFlag, SameLevel
from .physics import PlasmaParams

logger = logging.getLogger(__name__)

INDICATOR_KINDS = ("gs", "lgs", "ldr")


@dataclass(frozen=True)
class AmrConfig:
    indicator: str = "ldr"
    chi_min: float = 0.1
    chi_max: float = 1.0
    epsilon: float = 1e-30
    n_adapt: int = 8
    n_pred: int = 8
    pred_cfl: float = 0.9

    def __post_init__(self):
        if self.indicator not in INDICATOR_KINDS:
            raise ValueError(f"unknown indicator {self.indicator!r}")
        if not (0.0 <= self.chi_min < self.chi_max):
            raise ValueError("need 0 <= chi_min < chi_max")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")


def indicator_value(values, kind: str, eps: float = 1e-30) -> float:
    """Indicator of one sample set (any shape); magnitudes shifted by eps."""
    g = np.abs(np.asarray(values, dtype=float)) + eps
    hi, lo = float(g.max()), float(g.min())
    if kind == "gs":
        return (hi - lo) / lo
    if kind == "lgs":
        return math.log(hi) - math.log(lo)
    if kind == "ldr":
        return math.log(hi / lo)
    raise ValueError(f"unknown indicator {kind!r}")


def compute_indicators(mesh: QuadMesh, f_vals: np.ndarray, kind: str,
                       eps: float = 1e-30) -> np.ndarray:
    """Per-leaf indicators from interior distribution values (N, 2, 2)."""
    g = np.abs(f_vals.reshape(mesh.n_leaves, 4)) + eps
    hi = g.max(axis=1)
    lo = g.min(axis=1)
    if kind == "gs":
        return (hi - lo) / lo
    if kind == "lgs":
        return np.log(hi) - np.log(lo)
    if kind == "ldr":
        return np.log(hi / lo)
    raise ValueError(f"unknown indicator {kind!r}")


def flag_cells(chi: np.ndarray, chi_min: float, chi_max: float) -> np.ndarray:
    flags = np.full(chi.shape, RefineFlag.KEEP, dtype=np.int8)
    flags[chi < chi_min] = RefineFlag.COARSEN
    flags[chi > chi_max] = RefineFlag.REFINE
    return flags


class _AdvectionGraph:
    """Donor-cell transport of leaf-centered scalars on the current mesh."""

    def __init__(self, mesh: QuadMesh, params: PlasmaParams):
        left, right, vel, area = [], [], [], []
        b_idx, b_rate = [], []
        wp = 2.0 * mesh.dp
        wxi = 2.0 * mesh.dxi
        pc = 0.5 * (mesh.p_lo + mesh.p_hi)
        xc = 0.5 * (mesh.xi_lo + mesh.xi_hi)
        self.vol = wp * wxi

        def emit(lo_leaf, hi_leaf, p, xi, axis, face_len):
            a_p, a_xi = physics.advection_coeffs(p, xi, params)
            v = float(a_p if axis == 0 else a_xi)
            left.append(lo_leaf)
            right.append(hi_leaf)
            vel.append(v)
            area.append(face_len)

        for l in range(mesh.n_leaves):
            # same-level faces are owned by the low-side leaf; hanging faces
            # are owned by the fine leaf (one entry per fine sub-face)
            for axis, side in ((0, "p_hi"), (1, "xi_hi")):
                nbr = mesh.face_neighbors(l, side)
                if axis == 0:
                    p, xi, flen = mesh.p_hi[l], xc[l], wxi[l]
                else:
                    p, xi, flen = pc[l], mesh.xi_hi[l], wp[l]
                if isinstance(nbr, (SameLevel, Coarser)):
                    emit(l, nbr.index, p, xi, axis, flen)
            for axis, side in ((0, "p_lo"), (1, "xi_lo")):
                nbr = mesh.face_neighbors(l, side)
                if isinstance(nbr, Coarser):
                    if axis == 0:
                        emit(nbr.index, l, mesh.p_lo[l], xc[l], axis, wxi[l])
                    else:
                        emit(nbr.index, l, pc[l], mesh.xi_lo[l], axis, wp[l])
            # open domain boundaries: outflow only
            for axis, side, sgn in ((0, "p_lo", -1), (0, "p_hi", +1),
                                    (1, "xi_lo", -1), (1, "xi_hi", +1)):
                nbr = mesh.face_neighbors(l, side)
                if not isinstance(nbr, Boundary):
                    continue
                if axis == 0:
                    p = mesh.p_lo[l] if sgn < 0 else mesh.p_hi[l]
                    xi, flen = xc[l], wxi[l]
                else:
                    xi = mesh.xi_lo[l] if sgn < 0 else mesh.xi_hi[l]
                    p, flen = pc[l], wp[l]
                a_p, a_xi = physics.advection_coeffs(p, xi, params)
                v = float(a_p if axis == 0 else a_xi)
                if v * sgn > 0.0:
                    b_idx.append(l)
                    b_rate.append(abs(v) * flen)

        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.vel = np.array(vel)
        self.area = np.array(area)
        self.b_idx = np.array(b_idx, dtype=np.int64)
        self.b_rate = np.array(b_rate)

    def max_rate(self) -> float:
        """Largest outflow rate / volume over leaves (inverse CFL time)."""
        rate = np.zeros(self.vol.size)
        flow = np.abs(self.vel) * self.area
        np.add.at(rate, self.left, flow)
        np.add.at(rate, self.right, flow)
        if self.b_idx.size:
            np.add.at(rate, self.b_idx, self.b_rate)
        return float((rate / self.vol).max())

    def substep(self, chi: np.ndarray, dt: float) -> np.ndarray:
        up = np.where(self.vel >= 0.0, chi[self.left], chi[self.right])
        flux = self.vel * up * self.area
        out = chi.copy()
        np.add.at(out, self.left, -dt * flux / self.vol[self.left])
        np.add.at(out, self.right, dt * flux / self.vol[self.right])
        if self.b_idx.size:
            out[self.b_idx] -= dt * self.b_rate * chi[self.b_idx] / self.vol[self.b_idx]
        return out


def predict_indicators(mesh: QuadMesh, chi: np.ndarray, params: PlasmaParams,
                       dt_pred: float, cfl: float = 0.9) -> np.ndarray:
    """Running max of the indicator transported over the next ``dt_pred``."""
    if dt_pred <= 0.0:
        return chi.copy()
    graph = _AdvectionGraph(mesh, params)
    rate = graph.max_rate()
    if rate <= 0.0:
        return chi.copy()
    n_sub = max(1, math.ceil(dt_pred * rate / cfl))
    dt_sub = dt_pred / n_sub
    running = chi.copy()
    work = chi.copy()
    for _ in range(n_sub):
        work = graph.substep(work, dt_sub)
        np.maximum(running, work, out=running)
    return running


def adapt_cycle(mesh: QuadMesh, u: np.ndarray, params: PlasmaParams,
                amr: AmrConfig, dt_pred: float = 0.0,
                positivity: bool = True):
    """One full indicator -> flag -> adapt -> transfer cycle.

    Returns (new_mesh, new_u, chi, summary).
    """
    f = u.reshape(mesh.n_leaves, 2, 2) / mesh.p_c[:, :, None]
    chi = compute_indicators(mesh, f, amr.indicator, amr.epsilon)
    chi_used = predict_indicators(mesh, chi, params, dt_pred, amr.pred_cfl) \
        if dt_pred > 0.0 else chi
    flags = flag_cells(chi_used, amr.chi_min, amr.chi_max)
    new_mesh, summary = mesh.refine_and_balance(flags)
    new_u = transfer_on_adapt(mesh, new_mesh, u, positivity=positivity)
    return new_mesh, new_u, chi, summary
