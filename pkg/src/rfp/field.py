"""Leaf payload storage, guard-layer filling, and transfer between meshes.

Each leaf owns a 2x2 block of finite-volume cells for the conservative
variable (p-weighted distribution) plus a guard ring of width 2, so the
padded payload of a leaf is a 6x6 block with the interior at [2:4, 2:4].

Guard values come from copies (same-level neighbors), tensor-product bilinear
interpolation (coarser neighbors; linear fields are reproduced to round-off),
or arithmetic averaging of the finer cells tiling the guard cell (finer
neighbors; also linear-exact since cell centers average to the guard center).
Domain-boundary guards are produced by the boundary rule attached to the
plan.  All of this is precomputed into one sparse operator per (mesh,
boundary) pair so repeated fills are a single matrix-vector product.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import QuadMesh

PAD = 2          # guard ring width
NSIDE = 6        # padded block edge length
NPAD = NSIDE * NSIDE


@dataclass(frozen=True)
class BoundarySpec:
    """Domain-boundary closure for guard filling.

    mode "physical": Dirichlet at p_min (fixed boundary value ``dirichlet``
    for the conserved variable, ghosts linearly extrapolated through the face
    value), homogeneous Neumann (mirror) at p_max, reflection at xi = +-1.

    mode "mms": guards at both p boundaries take the exact manufactured
    value at the guard-cell center, ``exact_f(t, p, xi)`` being the exact
    distribution f (the conserved variable is p*f); xi sides reflect.

    mode "zeroflux": mirror closure on every side; the discretization
    additionally zeroes the boundary fluxes, making the domain closed.
    """

    mode: str = "physical"
    dirichlet: float = 0.0
    exact_f: Callable | None = None

    def __post_init__(self):
        if self.mode not in ("physical", "mms", "zeroflux"):
            raise ValueError(f"unknown boundary mode {self.mode!r}")
        if self.mode == "mms" and self.exact_f is None:
            raise ValueError("mms boundary mode needs exact_f")


class SolutionField:
    """Padded per-leaf payload of the conserved variable."""

    def __init__(self, mesh: QuadMesh, data: np.ndarray | None = None):
        self.mesh = mesh
        if data is None:
            data = np.zeros((mesh.n_leaves, NSIDE, NSIDE))
        if data.shape != (mesh.n_leaves, NSIDE, NSIDE):
            raise ValueError("payload shape mismatch")
        self.data = data

    @property
    def interior(self) -> np.ndarray:
        return self.data[:, PAD:PAD + 2, PAD:PAD + 2]

    def vector(self) -> np.ndarray:
        return self.interior.reshape(-1).copy()

    def set_vector(self, u: np.ndarray) -> None:
        self.interior[...] = u.reshape(self.mesh.n_leaves, 2, 2)

    @classmethod
    def from_f(cls, mesh: QuadMesh, f_fn) -> "SolutionField":
        """Initialize the conserved variable p*f from a distribution f(p, xi)."""
        fld = cls(mesh)
        pc = mesh.p_c[:, :, None]        # (N, 2, 1)
        xc = mesh.xi_c[:, None, :]       # (N, 1, 2)
        fld.interior[...] = pc * f_fn(np.broadcast_to(pc, (mesh.n_leaves, 2, 2)),
                                      np.broadcast_to(xc, (mesh.n_leaves, 2, 2)))
        return fld

    def f_values(self) -> np.ndarray:
        """Distribution f = (conserved variable)/p at interior cell centers."""
        return self.interior / self.mesh.p_c[:, :, None]


def cell_masses(mesh: QuadMesh, u: np.ndarray) -> np.ndarray:
    """Per-cell p-weighted measure contributions of the interior vector."""
    w = (mesh.p_c[:, :, None] * (mesh.dp * mesh.dxi)[:, None, None])
    return u.reshape(mesh.n_leaves, 2, 2) * w


def discrete_mass(mesh: QuadMesh, u: np.ndarray) -> float:
    return float(cell_masses(mesh, u).sum())


# ----------------------------------------------------------------------
# guard fill plan


class _Expr:
    """Affine expression over interior unknowns used during plan assembly."""

    __slots__ = ("lin", "aff")

    def __init__(self):
        self.lin: dict[int, float] = {}
        self.aff: list[tuple[str, float, float, float]] = []  # (kind, coeff, p, xi)

    def add(self, idx: int, w: float):
        self.lin[idx] = self.lin.get(idx, 0.0) + w

    def add_scaled(self, other: "_Expr", s: float):
        for k, w in other.lin.items():
            self.add(k, s * w)
        self.aff.extend((kind, s * c, p, xi) for kind, c, p, xi in other.aff)


class GuardFillPlan:
    """Precomputed guard filler for one (mesh, boundary) pair.

    ``apply`` maps the interior vector to the full padded data.  When
    ``positivity`` is on, guard strips produced by coarse-to-fine
    interpolation are clamped at zero and rescaled within the interpolation
    stencil so that clamping does not change the strip's p-weighted mass.
    """

    def __init__(self, mesh: QuadMesh, bc: BoundarySpec, positivity: bool = True):
        self.mesh = mesh
        self.bc = bc
        self.positivity = positivity
        self._build()

    # -- assembly ------------------------------------------------------

    def _build(self) -> None:
        mesh, bc = self.mesh, self.bc
        n = mesh.n_leaves
        exprs: list[_Expr | None] = [None] * (n * NPAD)
        groups: dict[tuple[int, int], list[int]] = {}

        def guard_center(l: int, i: int, j: int) -> tuple[float, float]:
            return (mesh.p_lo[l] + (i - PAD + 0.5) * mesh.dp[l],
                    mesh.xi_lo[l] + (j - PAD + 0.5) * mesh.dxi[l])

        deferred: list[tuple[int, int, int, bool, bool]] = []
        for l, (lv, gx, gy) in enumerate(mesh.keys()):
            nxf, nyf = mesh.n_p << (lv + 1), mesh.n_xi << (lv + 1)
            ox, oy = 2 * gx - PAD, 2 * gy - PAD
            for i in range(NSIDE):
                for j in range(NSIDE):
                    pos = l * NPAD + i * NSIDE + j
                    if PAD <= i < PAD + 2 and PAD <= j < PAD + 2:
                        e = _Expr()
                        e.add(l * 4 + (i - PAD) * 2 + (j - PAD), 1.0)
                        exprs[pos] = e
                        continue
                    fx, fy = ox + i, oy + j
                    p_in, xi_in = 0 <= fx < nxf, 0 <= fy < nyf
                    if p_in and xi_in:
                        exprs[pos] = self._interior_source(l, lv, fx, fy, i, j,
                                                           guard_center, groups, pos)
                    else:
                        deferred.append((l, i, j, p_in, xi_in))

        # pass A: out of domain in p only
        for l, i, j, p_in, xi_in in deferred:
            if p_in or not xi_in:
                continue
            pos = l * NPAD + i * NSIDE + j
            e = _Expr()
            if i < PAD:   # p_min side; mirror partner across the face
                partner = exprs[l * NPAD + (3 - i) * NSIDE + j]
                if bc.mode == "physical":
                    e.aff.append(("dirichlet", 2.0, 0.0, 0.0))
                    e.add_scaled(partner, -1.0)
                elif bc.mode == "mms":
                    pg, xg = guard_center(l, i, j)
                    e.aff.append(("exact", 1.0, pg, xg))
                else:
                    e.add_scaled(partner, 1.0)
            else:          # p_max side
                partner = exprs[l * NPAD + (7 - i) * NSIDE + j]
                if bc.mode == "mms":
                    pg, xg = guard_center(l, i, j)
                    e.aff.append(("exact", 1.0, pg, xg))
                else:
                    e.add_scaled(partner, 1.0)
            exprs[pos] = e

        # pass B: out of domain in xi (possibly also in p): reflect in xi,
        # referencing positions already resolved above
        for l, i, j, p_in, xi_in in deferred:
            if xi_in:
                continue
            pos = l * NPAD + i * NSIDE + j
            mj = 3 - j if j < PAD else 7 - j
            partner = exprs[l * NPAD + i * NSIDE + mj]
            if partner is None:
                raise RuntimeError("guard resolution order violated")
            e = _Expr()
            e.add_scaled(partner, 1.0)
            exprs[pos] = e

        self._assemble(exprs, groups)

    def _interior_source(self, l, lv, fx, fy, i, j, guard_center, groups, pos) -> _Expr:
        """Expression for an in-domain guard cell (fv slot fx, fy at level lv)."""
        mesh = self.mesh
        e = _Expr()
        owner = mesh.leafmap.get((lv, fx >> 1, fy >> 1))
        if owner is not None:
            e.add(owner * 4 + (fx & 1) * 2 + (fy & 1), 1.0)
            return e
        coarse = mesh.find_leaf(lv, fx >> 1, fy >> 1)
        if coarse is not None:
            pg, xg = guard_center(l, i, j)
            pc, xc = mesh.p_c[coarse], mesh.xi_c[coarse]
            tp = (pg - pc[0]) / (pc[1] - pc[0])
            tx = (xg - xc[0]) / (xc[1] - xc[0])
            for a, wa in ((0, 1.0 - tp), (1, tp)):
                for b, wb in ((0, 1.0 - tx), (1, tx)):
                    e.add(coarse * 4 + a * 2 + b, wa * wb)
            groups.setdefault((l, coarse), []).append(pos)
            return e
        # finer coverage: arithmetic mean, weighted by area fraction
        total = 0.0
        for d in mesh.descendants(lv + 1, fx, fy):
            dl = mesh.level[d]
            w = 0.25 * 4.0 ** (-(dl - lv - 1))
            for c in range(4):
                e.add(d * 4 + c, w)
            total += 4 * w
        if abs(total - 1.0) > 1e-12:
            raise RuntimeError("guard cell not tiled by finer leaves")
        return e

    def _assemble(self, exprs, groups) -> None:
        mesh = self.mesh
        rows, cols, vals = [], [], []
        aff_static_idx, aff_static_val = [], []
        aff_exact = []  # (pos, coeff, p, xi)
        for pos, e in enumerate(exprs):
            for idx, w in e.lin.items():
                rows.append(pos)
                cols.append(idx)
                vals.append(w)
            for kind, c, p, xi in e.aff:
                if kind == "dirichlet":
                    aff_static_idx.append(pos)
                    aff_static_val.append(c * self.bc.dirichlet)
                else:
                    aff_exact.append((pos, c, p, xi))
        npos = mesh.n_leaves * NPAD
        self.G = sp.csr_matrix((vals, (rows, cols)),
                               shape=(npos, mesh.n_leaves * 4))
        self.aff_static_idx = np.array(aff_static_idx, dtype=np.int64)
        self.aff_static_val = np.array(aff_static_val)
        if aff_exact:
            ae = np.array(aff_exact)
            self.aff_exact_idx = ae[:, 0].astype(np.int64)
            self.aff_exact_coeff = ae[:, 1]
            self.aff_exact_p = ae[:, 2]
            self.aff_exact_xi = ae[:, 3]
        else:
            self.aff_exact_idx = np.zeros(0, dtype=np.int64)

        # positivity groups: flattened CSR of padded positions + mass weights
        grp_pos, grp_ptr = [], [0]
        for key in sorted(groups):
            grp_pos.extend(groups[key])
            grp_ptr.append(len(grp_pos))
        self.grp_pos = np.array(grp_pos, dtype=np.int64)
        self.grp_ptr = np.array(grp_ptr, dtype=np.int64)
        leaf_of = self.grp_pos // NPAD
        ii = (self.grp_pos % NPAD) // NSIDE
        pg = mesh.p_lo[leaf_of] + (ii - PAD + 0.5) * mesh.dp[leaf_of]
        self.grp_w = pg * mesh.dp[leaf_of] * mesh.dxi[leaf_of]

    # -- application ---------------------------------------------------

    def apply(self, u: np.ndarray, t: float = 0.0) -> np.ndarray:
        """Padded data (n_leaves, 6, 6) for interior vector ``u``."""
        padded = self.G @ u
        if self.aff_static_idx.size:
            np.add.at(padded, self.aff_static_idx, self.aff_static_val)
        if self.aff_exact_idx.size:
            vals = (self.aff_exact_coeff * self.aff_exact_p
                    * self.bc.exact_f(t, self.aff_exact_p, self.aff_exact_xi))
            np.add.at(padded, self.aff_exact_idx, vals)
        if self.positivity and self.grp_pos.size:
            v = padded[self.grp_pos]
            if np.any(v < 0.0):
                m0 = np.add.reduceat(self.grp_w * v, self.grp_ptr[:-1])
                vc = np.maximum(v, 0.0)
                m1 = np.add.reduceat(self.grp_w * vc, self.grp_ptr[:-1])
                scale = np.where((m1 > 0.0) & (m0 > 0.0), m0 / np.maximum(m1, 1e-300), 0.0)
                reps = np.diff(self.grp_ptr)
                padded[self.grp_pos] = vc * np.repeat(scale, reps)
        return padded.reshape(self.mesh.n_leaves, NSIDE, NSIDE)


def fill_guard_layers(mesh: QuadMesh, u: np.ndarray, bc: BoundarySpec,
                      t: float = 0.0, positivity: bool = True) -> np.ndarray:
    """One-shot guard fill (builds a throwaway plan; prefer GuardFillPlan)."""
    return GuardFillPlan(mesh, bc, positivity=positivity).apply(u, t)


# ----------------------------------------------------------------------
# transfer between meshes


def transfer_on_adapt(old_mesh: QuadMesh, new_mesh: QuadMesh, u_old: np.ndarray,
                      positivity: bool = True) -> np.ndarray:
    """Move an interior vector from ``old_mesh`` to ``new_mesh``.

    Unchanged leaves copy; coarsened leaves take the p-weighted conservative
    average of their four former children; refined leaves take bilinear
    interpolation of the parent's interior followed (when ``positivity``)
    by a clamp at zero and a per-parent rescaling that restores the parent's
    p-weighted mass exactly.
    """
    u_old = np.asarray(u_old, dtype=float).reshape(old_mesh.n_leaves, 2, 2)
    u_new = np.zeros((new_mesh.n_leaves, 2, 2))
    # groups[old_leaf] -> list of (new_leaf) descendants for mass restore
    desc_groups: dict[int, list[int]] = {}

    for nl, key in enumerate(new_mesh.keys()):
        lv, gx, gy = key
        ol = old_mesh.leafmap.get(key)
        if ol is not None:
            u_new[nl] = u_old[ol]
            continue
        anc = None
        for alv in range(lv - 1, -1, -1):
            anc = old_mesh.leafmap.get((alv, gx >> (lv - alv), gy >> (lv - alv)))
            if anc is not None:
                break
        if anc is not None:
            pc, xc = old_mesh.p_c[anc], old_mesh.xi_c[anc]
            for a in range(2):
                for b in range(2):
                    pt = new_mesh.p_lo[nl] + (a + 0.5) * new_mesh.dp[nl]
                    xt = new_mesh.xi_lo[nl] + (b + 0.5) * new_mesh.dxi[nl]
                    tp = (pt - pc[0]) / (pc[1] - pc[0])
                    tx = (xt - xc[0]) / (xc[1] - xc[0])
                    u_new[nl, a, b] = ((1 - tp) * (1 - tx) * u_old[anc, 0, 0]
                                       + tp * (1 - tx) * u_old[anc, 1, 0]
                                       + (1 - tp) * tx * u_old[anc, 0, 1]
                                       + tp * tx * u_old[anc, 1, 1])
            desc_groups.setdefault(anc, []).append(nl)
            continue
        # coarsening: the four former children tile this leaf
        for a in range(2):
            for b in range(2):
                child = old_mesh.leafmap.get((lv + 1, 2 * gx + a, 2 * gy + b))
                if child is None:
                    raise RuntimeError(f"no transfer source for new leaf {key}")
                w_old = old_mesh.p_c[child][:, None] * old_mesh.dp[child] * old_mesh.dxi[child]
                mass = float((u_old[child] * w_old).sum())
                pc_new = new_mesh.p_lo[nl] + (a + 0.5) * new_mesh.dp[nl]
                u_new[nl, a, b] = mass / (pc_new * new_mesh.dp[nl] * new_mesh.dxi[nl])

    if positivity and desc_groups:
        for ol, nls in desc_groups.items():
            w_old = old_mesh.p_c[ol][:, None] * old_mesh.dp[ol] * old_mesh.dxi[ol]
            target = float((u_old[ol] * w_old).sum())
            nls = np.array(nls)
            w_new = (new_mesh.p_c[nls][:, :, None]
                     * (new_mesh.dp[nls] * new_mesh.dxi[nls])[:, None, None])
            block = np.maximum(u_new[nls], 0.0)
            got = float((block * w_new).sum())
            if target > 0.0 and got > 0.0:
                u_new[nls] = block * (target / got)
            elif target <= 0.0:
                u_new[nls] = 0.0
            # target > 0 but nothing survived the clamp: leave zeros
    return u_new.reshape(-1)
