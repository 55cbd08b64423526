"""Adaptive quadtree mesh over the two-dimensional momentum domain (p, xi).

The domain is tiled by a root grid of ``n_p x n_xi`` trees.  Each tree is
refined by dyadic quadrisection; the leaves of the resulting forest carry the
finite-volume payload (a 2x2 block of cells per leaf, managed elsewhere).
Leaves are kept in space-filling-curve order: Morton (z-order) within a tree,
row-major across trees.  The forest is kept 2:1 balanced so that any two
leaves sharing a face or a corner differ by at most one refinement level.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator

import numpy as np

logger = logging.getLogger(__name__)

# Bit budget for Morton keys; levels beyond this are not representable.
_MAX_LEVEL = 24


class RefineFlag(IntEnum):
    COARSEN = -1
    KEEP = 0
    REFINE = 1


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned bounds of the momentum domain."""

    p_min: float
    p_max: float
    xi_min: float = -1.0
    xi_max: float = 1.0

    def __post_init__(self) -> None:
        if not (self.p_min < self.p_max):
            raise ValueError(f"need p_min < p_max, got [{self.p_min}, {self.p_max}]")
        if not (self.xi_min < self.xi_max):
            raise ValueError(f"need xi_min < xi_max, got [{self.xi_min}, {self.xi_max}]")


def _morton(ix: int, iy: int) -> int:
    """Interleave the bits of (ix, iy); iy occupies the odd bits."""
    key = 0
    for b in range(_MAX_LEVEL):
        key |= ((ix >> b) & 1) << (2 * b)
        key |= ((iy >> b) & 1) << (2 * b + 1)
    return key


@dataclass(frozen=True)
class AdaptSummary:
    refined: int = 0
    coarsened: int = 0
    clipped_refine: int = 0
    clipped_coarsen: int = 0
    balance_refined: int = 0


# Neighbor descriptors returned by QuadMesh.face_neighbors.
@dataclass(frozen=True)
class Boundary:
    side: str


@dataclass(frozen=True)
class SameLevel:
    index: int


@dataclass(frozen=True)
class Coarser:
    index: int
    child_pos: int  # which half of the coarse face this leaf touches (0 or 1)


@dataclass(frozen=True)
class Finer:
    indices: tuple[int, int]  # ordered along increasing transverse coordinate


_SIDES = ("p_lo", "p_hi", "xi_lo", "xi_hi")


class QuadMesh:
    """Forest-of-quadtrees leaf set with SFC ordering and neighbor queries.

    Leaves are identified by ``(level, gx, gy)`` where ``gx`` / ``gy`` are
    global integer coordinates at that level, i.e. ``gx in [0, n_p * 2**level)``.
    Leaf bounds are exact dyadic subdivisions of the root tree boxes.
    """

    def __init__(self, n_p: int, n_xi: int, box: DomainBox,
                 min_level: int = 0, max_level: int = 8,
                 keys: list[tuple[int, int, int]] | None = None):
        if n_p < 1 or n_xi < 1:
            raise ValueError("root grid must have at least one tree per direction")
        if not (0 <= min_level <= max_level <= _MAX_LEVEL):
            raise ValueError(f"bad level bounds ({min_level}, {max_level})")
        self.n_p = n_p
        self.n_xi = n_xi
        self.box = box
        self.min_level = min_level
        self.max_level = max_level
        if keys is None:
            keys = [(0, ix, iy) for iy in range(n_xi) for ix in range(n_p)]
        self._set_keys(keys)

    # ------------------------------------------------------------------
    # construction helpers

    def _sfc_key(self, key: tuple[int, int, int]) -> tuple[int, int]:
        level, gx, gy = key
        tx, ty = gx >> level, gy >> level
        lx, ly = gx - (tx << level), gy - (ty << level)
        tree = ty * self.n_p + tx
        return (tree, _morton(lx, ly) << (2 * (_MAX_LEVEL - level)))

    def _set_keys(self, keys) -> None:
        keys = sorted(keys, key=self._sfc_key)
        self.level = np.array([k[0] for k in keys], dtype=np.int32)
        self.gx = np.array([k[1] for k in keys], dtype=np.int64)
        self.gy = np.array([k[2] for k in keys], dtype=np.int64)
        self.leafmap = {k: i for i, k in enumerate(keys)}
        self._keys = keys
        self._geometry()

    def _geometry(self) -> None:
        box = self.box
        wp = (box.p_max - box.p_min) / self.n_p
        wx = (box.xi_max - box.xi_min) / self.n_xi
        scale = np.ldexp(1.0, -self.level.astype(np.int64))  # 2**-level, exact
        self.p_lo = box.p_min + wp * (self.gx * scale)
        self.p_hi = box.p_min + wp * ((self.gx + 1) * scale)
        self.xi_lo = box.xi_min + wx * (self.gy * scale)
        self.xi_hi = box.xi_min + wx * ((self.gy + 1) * scale)
        # finite-volume cell sizes (2x2 block per leaf)
        self.dp = (self.p_hi - self.p_lo) / 2.0
        self.dxi = (self.xi_hi - self.xi_lo) / 2.0
        # cell centers: p_c[l, i], xi_c[l, j] with i, j in {0, 1}
        self.p_c = self.p_lo[:, None] + (np.array([0.5, 1.5]) * self.dp[:, None])
        self.xi_c = self.xi_lo[:, None] + (np.array([0.5, 1.5]) * self.dxi[:, None])
        self.p_f = self.p_lo[:, None] + (np.array([0.0, 1.0, 2.0]) * self.dp[:, None])
        self.xi_f = self.xi_lo[:, None] + (np.array([0.0, 1.0, 2.0]) * self.dxi[:, None])

    # ------------------------------------------------------------------
    # basic queries

    @property
    def n_leaves(self) -> int:
        return len(self._keys)

    @property
    def n_cells(self) -> int:
        """Total finite-volume cell count (4 per leaf)."""
        return 4 * self.n_leaves

    def keys(self) -> list[tuple[int, int, int]]:
        return list(self._keys)

    def extent(self, level: int) -> tuple[int, int]:
        """Number of leaf slots per direction at ``level`` across the forest."""
        return self.n_p << level, self.n_xi << level

    def find_leaf(self, level: int, gx: int, gy: int) -> int | None:
        """Index of the leaf that is, or is an ancestor of, ``(level, gx, gy)``."""
        for lv in range(level, -1, -1):
            idx = self.leafmap.get((lv, gx >> (level - lv), gy >> (level - lv)))
            if idx is not None:
                return idx
        return None

    def descendants(self, level: int, gx: int, gy: int) -> Iterator[int]:
        """Leaves at or below slot ``(level, gx, gy)`` that tile its area."""
        stack = [(level, gx, gy)]
        while stack:
            key = stack.pop()
            idx = self.leafmap.get(key)
            if idx is not None:
                yield idx
            elif key[0] < _MAX_LEVEL:
                lv, x, y = key
                stack.extend((lv + 1, 2 * x + dx, 2 * y + dy)
                             for dx in (0, 1) for dy in (0, 1))
            else:
                raise RuntimeError(f"slot ({level}, {gx}, {gy}) is not tiled by leaves")

    def face_neighbors(self, index: int, side: str):
        """Neighbor descriptor of leaf ``index`` across ``side``.

        ``side`` is one of ``p_lo``, ``p_hi``, ``xi_lo``, ``xi_hi``.  Returns
        Boundary, SameLevel, Coarser (with the child position of this leaf on
        the coarse face), or Finer (two half-face neighbors ordered along the
        transverse coordinate).
        """
        if side not in _SIDES:
            raise ValueError(f"unknown side {side!r}")
        lv, gx, gy = self._keys[index]
        nx, ny = self.extent(lv)
        if side == "p_lo":
            tx, ty = gx - 1, gy
        elif side == "p_hi":
            tx, ty = gx + 1, gy
        elif side == "xi_lo":
            tx, ty = gx, gy - 1
        else:
            tx, ty = gx, gy + 1
        if not (0 <= tx < nx and 0 <= ty < ny):
            return Boundary(side)
        idx = self.leafmap.get((lv, tx, ty))
        if idx is not None:
            return SameLevel(idx)
        coarse = self.find_leaf(lv, tx, ty)
        if coarse is not None:
            pos = (gy & 1) if side in ("p_lo", "p_hi") else (gx & 1)
            return Coarser(coarse, pos)
        # 2:1 balance guarantees the finer side is exactly one level down
        if side in ("p_lo", "p_hi"):
            fx = 2 * tx + (1 if side == "p_lo" else 0)
            pair = ((lv + 1, fx, 2 * ty), (lv + 1, fx, 2 * ty + 1))
        else:
            fy = 2 * ty + (1 if side == "xi_lo" else 0)
            pair = ((lv + 1, 2 * tx, fy), (lv + 1, 2 * tx + 1, fy))
        try:
            return Finer((self.leafmap[pair[0]], self.leafmap[pair[1]]))
        except KeyError as err:
            raise RuntimeError(f"mesh is not 2:1 balanced near leaf {self._keys[index]}") from err

    # ------------------------------------------------------------------
    # adaptation

    def _region_max_level(self, keyset: dict, level: int, gx: int, gy: int) -> int:
        """Max leaf level within the area of slot ``(level, gx, gy)``, or -1."""
        for lv in range(level, -1, -1):
            if (lv, gx >> (level - lv), gy >> (level - lv)) in keyset:
                return lv
        best = -1
        stack = [(level + 1, 2 * gx + dx, 2 * gy + dy) for dx in (0, 1) for dy in (0, 1)]
        while stack:
            key = stack.pop()
            if key in keyset:
                best = max(best, key[0])
            elif key[0] < _MAX_LEVEL:
                lv, x, y = key
                stack.extend((lv + 1, 2 * x + dx, 2 * y + dy) for dx in (0, 1) for dy in (0, 1))
        return best

    def _neighbor_slots(self, level: int, gx: int, gy: int):
        nx, ny = self.extent(level)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                tx, ty = gx + dx, gy + dy
                if 0 <= tx < nx and 0 <= ty < ny:
                    yield tx, ty

    def refine_and_balance(self, flags: np.ndarray) -> tuple["QuadMesh", AdaptSummary]:
        """Apply per-leaf refinement flags, then restore 2:1 balance.

        Coarsening happens only where all four siblings are flagged COARSEN
        and the result cannot violate balance; clipped requests are counted in
        the returned summary rather than raised.
        """
        flags = np.asarray(flags)
        if flags.shape != (self.n_leaves,):
            raise ValueError("one flag per leaf required")
        keyset = set(self._keys)
        refined = clipped_refine = coarsened = clipped_coarsen = balance_refined = 0

        to_refine = []
        for i, key in enumerate(self._keys):
            if flags[i] == RefineFlag.REFINE:
                if key[0] >= self.max_level:
                    clipped_refine += 1
                else:
                    to_refine.append(key)
        for lv, gx, gy in to_refine:
            keyset.remove((lv, gx, gy))
            keyset.update((lv + 1, 2 * gx + dx, 2 * gy + dy) for dx in (0, 1) for dy in (0, 1))
            refined += 1
        just_refined = set(to_refine)

        # group COARSEN flags into complete sibling quartets
        want_coarsen = {self._keys[i] for i in range(self.n_leaves)
                        if flags[i] == RefineFlag.COARSEN}
        seen_parents = set()
        n_requests_clipped = 0
        for lv, gx, gy in sorted(want_coarsen):
            if lv <= self.min_level or lv == 0:
                n_requests_clipped += 1
                continue
            parent = (lv - 1, gx >> 1, gy >> 1)
            if parent in seen_parents:
                continue
            seen_parents.add(parent)
            siblings = [(lv, 2 * parent[1] + dx, 2 * parent[2] + dy)
                        for dx in (0, 1) for dy in (0, 1)]
            ok = all(s in want_coarsen and s in keyset and s not in just_refined
                     for s in siblings)
            if ok:
                # reject if any face/corner neighbor of the parent is already
                # more than one level finer than the parent would be
                plv, pgx, pgy = parent
                for tx, ty in self._neighbor_slots(plv, pgx, pgy):
                    if self._region_max_level(keyset, plv, tx, ty) > plv + 1:
                        ok = False
                        break
            if ok:
                for s in siblings:
                    keyset.remove(s)
                keyset.add(parent)
                coarsened += 1
            else:
                n_requests_clipped += len([s for s in siblings if s in want_coarsen])
        clipped_coarsen = n_requests_clipped

        # 2:1 balance ripple over faces and corners, finest levels first
        changed = True
        while changed:
            changed = False
            for key in sorted(keyset, key=lambda k: -k[0]):
                if key not in keyset:
                    continue  # may have been split already
                lv, gx, gy = key
                if lv < 2:
                    continue
                for tx, ty in self._neighbor_slots(lv, gx, gy):
                    cover = None
                    for clv in range(lv - 2, -1, -1):
                        ck = (clv, tx >> (lv - clv), ty >> (lv - clv))
                        if ck in keyset:
                            cover = ck
                            break
                    while cover is not None and cover[0] < lv - 1:
                        clv, cgx, cgy = cover
                        keyset.remove(cover)
                        keyset.update((clv + 1, 2 * cgx + dx, 2 * cgy + dy)
                                      for dx in (0, 1) for dy in (0, 1))
                        balance_refined += 1
                        changed = True
                        cover = (clv + 1, tx >> (lv - clv - 1), ty >> (lv - clv - 1))
                        if cover[0] >= lv - 1:
                            break

        new = QuadMesh(self.n_p, self.n_xi, self.box, self.min_level,
                       self.max_level, keys=list(keyset))
        summary = AdaptSummary(refined=refined, coarsened=coarsened,
                               clipped_refine=clipped_refine,
                               clipped_coarsen=clipped_coarsen,
                               balance_refined=balance_refined)
        if balance_refined:
            logger.debug("balance ripple refined %d extra leaves", balance_refined)
        return new, summary

    def refine_all(self) -> "QuadMesh":
        flags = np.full(self.n_leaves, RefineFlag.REFINE, dtype=np.int8)
        return self.refine_and_balance(flags)[0]


def build_base_mesh(n_p: int, n_xi: int, box: DomainBox,
                    min_level: int = 0, max_level: int = 8) -> QuadMesh:
    """Uniform forest with one level-0 leaf per root tree."""
    return QuadMesh(n_p, n_xi, box, min_level, max_level)


def write_mesh_csv(mesh: QuadMesh, path) -> None:
    """One row per leaf in SFC order: tree index, level, and bounds."""
    with open(path, "w") as fh:
        fh.write("tree,level,p_lo,p_hi,xi_lo,xi_hi\n")
        for i, (lv, gx, gy) in enumerate(mesh.keys()):
            tree = (gy >> lv) * mesh.n_p + (gx >> lv)
            fh.write(f"{tree},{lv},{mesh.p_lo[i]:.17g},{mesh.p_hi[i]:.17g},"
                     f"{mesh.xi_lo[i]:.17g},{mesh.xi_hi[i]:.17g}\n")
