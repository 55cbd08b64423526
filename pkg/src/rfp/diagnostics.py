"""Physics diagnostics and output writers.

All integrals use the 2*pi*p^2 dp dxi momentum-space measure for the
distribution f; the solver's conserved variable is u = p*f.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mesh import QuadMesh


def _f_values(mesh: QuadMesh, u: np.ndarray, positivity: bool) -> np.ndarray:
    f = u.reshape(mesh.n_leaves, 2, 2) / mesh.p_c[:, :, None]
    if positivity:
        f = np.maximum(f, 0.0)
    return f


def xi_line_integral(mesh: QuadMesh, u: np.ndarray, p: float,
                     weight=None, positivity: bool = True) -> float:
    """Integral over xi of f(p, xi) * weight(xi) at fixed momentum p.

    f is interpolated linearly in p between the two cell-center columns of
    each leaf whose p-extent contains the line (constant extension outside
    the centers, which keeps the result monotone in the data), and the xi
    integral uses the midpoint rule on that leaf's rows.
    """
    if not (mesh.box.p_min <= p <= mesh.box.p_max):
        raise ValueError(f"p = {p} outside domain")
    f = _f_values(mesh, u, positivity)
    hit = np.flatnonzero((mesh.p_lo <= p) & (p < mesh.p_hi))
    if hit.size == 0:  # p == p_max exactly
        hit = np.flatnonzero(mesh.p_hi == p)
    total = 0.0
    for l in hit:
        t = (p - mesh.p_c[l, 0]) / (mesh.p_c[l, 1] - mesh.p_c[l, 0])
        t = min(max(t, 0.0), 1.0)
        rows = (1.0 - t) * f[l, 0, :] + t * f[l, 1, :]
        if weight is not None:
            rows = rows * weight(mesh.xi_c[l])
        total += float(rows.sum() * mesh.dxi[l])
    return total


def runaway_population(mesh: QuadMesh, u: np.ndarray, p: float,
                       positivity: bool = True) -> float:
    """Parallel particle flux density R(p) = 2 pi p^2 * int f * (p xi/gamma) dxi."""
    gamma = np.sqrt(1.0 + p * p)
    flux = xi_line_integral(mesh, u, p, weight=lambda xi: xi, positivity=positivity)
    return 2.0 * np.pi * p**3 / gamma * flux


def total_mass(mesh: QuadMesh, u: np.ndarray) -> float:
    """Total particle content 2 pi * sum(u * p * dp * dxi)."""
    w = mesh.p_c[:, :, None] * (mesh.dp * mesh.dxi)[:, None, None]
    return float(2.0 * np.pi * (u.reshape(mesh.n_leaves, 2, 2) * w).sum())


def mms_relative_l2(mesh: QuadMesh, u: np.ndarray, exact_f, t: float) -> float:
    """p^2-weighted relative L2 error of f against a manufactured solution."""
    f = u.reshape(mesh.n_leaves, 2, 2) / mesh.p_c[:, :, None]
    pc = np.broadcast_to(mesh.p_c[:, :, None], f.shape)
    xc = np.broadcast_to(mesh.xi_c[:, None, :], f.shape)
    fex = exact_f(t, pc, xc)
    w = pc**2 * (mesh.dp * mesh.dxi)[:, None, None]
    num = float((w * (f - fex) ** 2).sum())
    den = float((w * fex**2).sum())
    if den == 0.0:
        raise ValueError("exact solution vanishes; relative error undefined")
    return np.sqrt(num / den)


# ----------------------------------------------------------------------
# output writers


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def write_json(path, record: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_vtk_snapshot(path, mesh: QuadMesh, u: np.ndarray) -> None:
    """Legacy-ASCII VTK unstructured grid; one quad per finite-volume cell.

    Cell data: the conserved variable u, the distribution f = u/p, and the
    leaf refinement level.  Points are written per cell (no deduplication),
    which keeps the writer simple and the files loadable by standard tools.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = mesh.n_leaves
    uu = u.reshape(n, 2, 2)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("momentum-space distribution snapshot\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        ncell = 4 * n
        fh.write(f"POINTS {4 * ncell} double\n")
        for l in range(n):
            for i in range(2):
                for j in range(2):
                    x0 = mesh.p_lo[l] + i * mesh.dp[l]
                    x1 = x0 + mesh.dp[l]
                    y0 = mesh.xi_lo[l] + j * mesh.dxi[l]
                    y1 = y0 + mesh.dxi[l]
                    fh.write(f"{x0:.17g} {y0:.17g} 0\n{x1:.17g} {y0:.17g} 0\n"
                             f"{x1:.17g} {y1:.17g} 0\n{x0:.17g} {y1:.17g} 0\n")
        fh.write(f"CELLS {ncell} {5 * ncell}\n")
        for c in range(ncell):
            b = 4 * c
            fh.write(f"4 {b} {b + 1} {b + 2} {b + 3}\n")
        fh.write(f"CELL_TYPES {ncell}\n")
        fh.write("9\n" * ncell)
        fh.write(f"CELL_DATA {ncell}\n")
        fh.write("SCALARS u double 1\nLOOKUP_TABLE default\n")
        for l in range(n):
            for i in range(2):
                for j in range(2):
                    fh.write(f"{uu[l, i, j]:.17g}\n")
        fh.write("SCALARS f double 1\nLOOKUP_TABLE default\n")
        for l in range(n):
            for i in range(2):
                for j in range(2):
                    fh.write(f"{uu[l, i, j] / mesh.p_c[l, i]:.17g}\n")
        fh.write("SCALARS level int 1\nLOOKUP_TABLE default\n")
        for l in range(n):
            fh.write((f"{mesh.level[l]}\n") * 4)
