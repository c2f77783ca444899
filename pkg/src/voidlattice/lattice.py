"""Lattice and voxel geometry on eps * Z^d.

Boxes are half-open ``[lo, hi)``. Lattice sites are stored as integer index
tuples; real coordinates are ``eps * index`` and only built on demand.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

_GUARD = 1e-9


def _as_box(region, d=None):
    lo, hi = region
    lo = np.asarray(lo, dtype=float).reshape(-1)
    hi = np.asarray(hi, dtype=float).reshape(-1)
    if lo.shape != hi.shape:
        raise ValueError("box corners have different dimensions")
    if d is not None and lo.size != d:
        raise ValueError(f"box has dimension {lo.size}, expected {d}")
    return lo, hi


def index_bounds(eps, region):
    """Integer index range [lo, hi) of the sites eps*i inside a half-open box."""
    lo, hi = _as_box(region)
    ilo = np.array([math.ceil(a / eps - _GUARD) for a in lo], dtype=np.int64)
    ihi = np.array([math.ceil(b / eps - _GUARD) for b in hi], dtype=np.int64)
    return ilo, np.maximum(ihi, ilo)


@dataclass(frozen=True)
class LatticeDomain:
    epsilon: float
    omega: tuple
    u_set: tuple

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        olo, ohi = _as_box(self.omega)
        ulo, uhi = _as_box(self.u_set, olo.size)
        if olo.size not in (2, 3):
            raise ValueError("only d = 2 or 3 is supported")
        if np.any(ohi <= olo):
            raise ValueError("omega is empty")
        if np.any(olo < ulo - _GUARD) or np.any(ohi > uhi + _GUARD):
            raise ValueError("omega must lie inside u_set")
        object.__setattr__(self, "omega", (tuple(olo), tuple(ohi)))
        object.__setattr__(self, "u_set", (tuple(ulo), tuple(uhi)))

    @classmethod
    def box(cls, eps, omega_lo, omega_hi, pad=0.0):
        """Omega = [lo, hi), U = Omega grown by ``pad`` on every side."""
        lo = np.asarray(omega_lo, dtype=float)
        hi = np.asarray(omega_hi, dtype=float)
        return cls(eps, (lo, hi), (lo - pad, hi + pad))

    @property
    def d(self):
        return len(self.omega[0])

    @property
    def omega_index_box(self):
        return index_bounds(self.epsilon, self.omega)

    @property
    def u_index_box(self):
        return index_bounds(self.epsilon, self.u_set)

    @property
    def u_shape(self):
        lo, hi = self.u_index_box
        return tuple(int(v) for v in hi - lo)

    def coordinate(self, i):
        return self.epsilon * np.asarray(i, dtype=float)

    def _inside(self, idx, box):
        idx = np.atleast_2d(np.asarray(idx, dtype=np.int64))
        lo, hi = box
        return np.all((idx >= lo) & (idx < hi), axis=1)

    def in_omega(self, idx):
        return self._inside(idx, self.omega_index_box)

    def in_u(self, idx):
        return self._inside(idx, self.u_index_box)

    def omega_mask(self):
        """Boolean array over the U index box marking the sites of Omega."""
        ulo, _ = self.u_index_box
        olo, ohi = self.omega_index_box
        m = np.zeros(self.u_shape, dtype=bool)
        m[tuple(slice(int(a - b), int(c - b)) for a, c, b in zip(olo, ohi, ulo))] = True
        return m

    def with_epsilon(self, eps):
        return LatticeDomain(eps, self.omega, self.u_set)


def lattice_index_array(domain: LatticeDomain, region) -> np.ndarray:
    lo, hi = index_bounds(domain.epsilon, _as_box(region, domain.d))
    axes = [np.arange(a, b, dtype=np.int64) for a, b in zip(lo, hi)]
    if any(ax.size == 0 for ax in axes):
        return np.zeros((0, domain.d), dtype=np.int64)
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)


def lattice_points(domain: LatticeDomain, region) -> list:
    """Sorted integer indices i with eps*i in the half-open box ``region``."""
    return [tuple(int(v) for v in row) for row in lattice_index_array(domain, region)]


def _sorted_unique(idx, d):
    idx = np.asarray(idx, dtype=np.int64).reshape(-1, d)
    if idx.shape[0] == 0:
        return idx
    return np.unique(idx, axis=0)


class VoidSet:
    """Finite set of void sites E inside Z_eps(Omega)."""

    def __init__(self, domain: LatticeDomain, indices=()):
        self.domain = domain
        idx = _sorted_unique(np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices), domain.d)
        if idx.shape[0] and not np.all(domain.in_omega(idx)):
            bad = idx[~domain.in_omega(idx)][0]
            raise ValueError(f"index {tuple(int(v) for v in bad)} lies outside omega")
        self.indices = idx
        self.indices.flags.writeable = False
        self._keys = None

    @classmethod
    def from_mask(cls, domain, mask, offset=None):
        """Build from a boolean array; ``offset`` is the index of mask[0, ..., 0]."""
        if offset is None:
            offset = domain.u_index_box[0]
        idx = np.argwhere(mask) + np.asarray(offset, dtype=np.int64)
        return cls(domain, idx)

    def __len__(self):
        return int(self.indices.shape[0])

    def __iter__(self):
        return (tuple(int(v) for v in row) for row in self.indices)

    def __contains__(self, i):
        if self._keys is None:
            self._keys = set(iter(self))
        return tuple(int(v) for v in i) in self._keys

    def __eq__(self, other):
        if not isinstance(other, VoidSet):
            return NotImplemented
        return self.domain == other.domain and np.array_equal(self.indices, other.indices)

    def mask(self):
        """Boolean indicator over the U index box."""
        m = np.zeros(self.domain.u_shape, dtype=bool)
        if len(self):
            rel = self.indices - self.domain.u_index_box[0]
            m[tuple(rel.T)] = True
        return m

    def shifted(self, v):
        return VoidSet(self.domain, self.indices + np.asarray(v, dtype=np.int64))

    def restricted(self, region):
        lo, hi = index_bounds(self.domain.epsilon, _as_box(region, self.domain.d))
        keep = np.all((self.indices >= lo) & (self.indices < hi), axis=1)
        return VoidSet(self.domain, self.indices[keep])

    def __repr__(self):
        return f"VoidSet(n={len(self)}, eps={self.domain.epsilon}, d={self.domain.d})"


@dataclass(frozen=True)
class VoxelSet:
    """Union of half-open cubes origin + cell_size * (c + [-1/2, 1/2)^d)."""

    cell_size: float
    cells: np.ndarray
    origin: tuple = field(default=None)

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64)
        if cells.ndim != 2:
            raise ValueError("cells must be an (n, d) integer array")
        d = cells.shape[1]
        cells = _sorted_unique(cells, d)
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)
        origin = np.zeros(d) if self.origin is None else np.asarray(self.origin, dtype=float)
        object.__setattr__(self, "origin", tuple(float(v) for v in origin))

    @classmethod
    def empty(cls, cell_size, d):
        return cls(cell_size, np.zeros((0, d), dtype=np.int64))

    @property
    def d(self):
        return self.cells.shape[1]

    def __len__(self):
        return int(self.cells.shape[0])

    @property
    def volume(self):
        return len(self) * self.cell_size ** self.d

    def lower_corners(self):
        return np.asarray(self.origin) + self.cell_size * (self.cells - 0.5)

    def boxes(self):
        lo = self.lower_corners()
        return lo, lo + self.cell_size

    def bounds(self):
        lo, hi = self.boxes()
        return lo.min(axis=0), hi.max(axis=0)

    def occupancy(self):
        """Dense boolean array over the bounding index box, plus its lowest index."""
        cached = self.__dict__.get("_occ")
        if cached is not None:
            return cached
        lo = self.cells.min(axis=0)
        m = np.zeros(tuple(self.cells.max(axis=0) - lo + 1), dtype=bool)
        m[tuple((self.cells - lo).T)] = True
        m.flags.writeable = False
        object.__setattr__(self, "_occ", (m, lo))
        return m, lo

    def cell_of(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.floor((x - np.asarray(self.origin)) / self.cell_size + 0.5).astype(np.int64)

    def contains_points(self, x):
        """Half-open membership of points (n, d)."""
        if len(self) == 0:
            return np.zeros(len(np.atleast_2d(x)), dtype=bool)
        m, lo = self.occupancy()
        c = self.cell_of(x) - lo
        ok = np.all((c >= 0) & (c < np.array(m.shape)), axis=1)
        out = np.zeros(len(c), dtype=bool)
        out[ok] = m[tuple(c[ok].T)]
        return out

    def exposed(self):
        """Cells with at least one face neighbour outside the set."""
        if len(self) == 0:
            return self
        m, lo = self.occupancy()
        p = np.pad(m, 1)
        inner = p.copy()
        for a in range(self.d):
            inner &= np.roll(p, 1, axis=a) & np.roll(p, -1, axis=a)
        keep = p & ~inner
        cells = np.argwhere(keep[tuple(slice(1, -1) for _ in range(self.d))]) + lo
        return VoxelSet(self.cell_size, cells, self.origin)

    def refined(self, k: int) -> "VoxelSet":
        """Same point set on a grid k times finer."""
        off = np.array(list(itertools.product(range(k), repeat=self.d)), dtype=np.int64)
        cells = (k * self.cells[:, None, :] + off[None]).reshape(-1, self.d)
        h = self.cell_size / k
        origin = np.asarray(self.origin) - 0.5 * self.cell_size + 0.5 * h
        return VoxelSet(h, cells, tuple(origin))

    def same_geometry(self, other) -> bool:
        return (self.d == other.d and math.isclose(self.cell_size, other.cell_size)
                and np.allclose(self.origin, other.origin) and np.array_equal(self.cells, other.cells))


def voxelize(E: VoidSet) -> VoxelSet:
    return VoxelSet(E.domain.epsilon, np.array(E.indices), tuple(np.zeros(E.domain.d)))


def _point_box_dist(x, lo, hi):
    """Distances from points x (n, d) to boxes (m, d) -> (n, m)."""
    g = np.maximum(lo[None] - x[:, None], 0.0) + np.maximum(x[:, None] - hi[None], 0.0)
    return np.sqrt(np.sum(g * g, axis=-1))


class _DistanceField:
    """Exact Euclidean distance to a voxel union, evaluated at points."""

    def __init__(self, B: VoxelSet):
        self.B = B
        ex = B.exposed()
        self.lo, self.hi = ex.boxes()
        self.r = 0.5 * math.sqrt(B.d) * B.cell_size
        self.tree = cKDTree(0.5 * (self.lo + self.hi))

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(len(x))
        outside = ~self.B.contains_points(x)
        if not np.any(outside):
            return out
        xo = x[outside]
        m = len(self.lo)
        if m <= 64:
            res = np.concatenate([_point_box_dist(xo[s:s + 4096], self.lo, self.hi).min(axis=1)
                                  for s in range(0, len(xo), 4096)])
        else:
            k = min(m, 16)
            dc, ic = self.tree.query(xo, k=k)
            cand = _point_box_dist_pairs(xo, self.lo[ic], self.hi[ic])
            res = cand.min(axis=1)
            # cells beyond the k nearest centres are at least dc[:, -1] - r away
            redo = np.nonzero(dc[:, -1] - self.r < res)[0]
            for j in redo:
                idx = self.tree.query_ball_point(xo[j], res[j] + self.r + 1e-12)
                res[j] = _point_box_dist(xo[j:j + 1], self.lo[idx], self.hi[idx]).min()
        out[outside] = res
        return out

    def far_corner_bound(self, plo, phi, centre_dist):
        """min over nearby cells b of the max distance from a corner of P to b."""
        corners = np.array(list(itertools.product(*zip(plo, phi))))
        c = 0.5 * (plo + phi)
        rad = 0.5 * np.linalg.norm(phi - plo)
        cand = self.tree.query_ball_point(c, centre_dist + rad + self.r + 1e-12)
        if not cand:
            return np.inf
        dist = _point_box_dist(corners, self.lo[cand], self.hi[cand])
        return float(dist.max(axis=0).min())


def _point_box_dist_pairs(x, lo, hi):
    """x (n, d) against per-point candidate boxes (n, k, d) -> (n, k)."""
    g = np.maximum(lo - x[:, None], 0.0) + np.maximum(x[:, None] - hi, 0.0)
    return np.sqrt(np.sum(g * g, axis=-1))


def _children(plo, phi):
    mid = 0.5 * (plo + phi)
    bits = np.array(list(itertools.product((0, 1), repeat=len(plo))), dtype=bool)
    return np.where(bits, mid, plo), np.where(bits, phi, mid)


def _directed_sup(A: VoxelSet, field_B: _DistanceField, best: float, atol: float) -> float:
    """sup over x in A of dist(x, B), pruned against a running global lower bound."""
    lo, hi = A.boxes()
    rad = 0.5 * math.sqrt(A.d) * A.cell_size
    dc = field_B(0.5 * (lo + hi))
    best = max(best, float(dc.max()))
    live = np.nonzero(dc + rad > best + atol)[0]
    heap = [(-(dc[k] + rad), int(k), lo[k], hi[k], dc[k]) for k in live]
    heapq.heapify(heap)
    counter = len(A)
    while heap:
        neg_ub, _, plo, phi, dcen = heapq.heappop(heap)
        if -neg_ub <= best + atol:
            break
        corners = np.array(list(itertools.product(*zip(plo, phi))))
        best = max(best, float(field_B(corners).max()))
        tight = field_B.far_corner_bound(plo, phi, dcen)
        if tight <= best + atol:
            continue
        klo, khi = _children(plo, phi)
        kc = field_B(0.5 * (klo + khi))
        best = max(best, float(kc.max()))
        krad = 0.5 * np.linalg.norm(khi[0] - klo[0])
        for j in range(len(klo)):
            ubj = min(kc[j] + krad, tight)
            if ubj > best + atol:
                counter += 1
                heapq.heappush(heap, (-ubj, counter, klo[j], khi[j], kc[j]))
    return best


def hausdorff_distance(A: VoxelSet, B: VoxelSet, atol=None) -> float:
    """Hausdorff distance between two voxel unions by branch and bound.

    Lower bounds come from exact point-to-box distances at sampled points, upper
    bounds from corner distances to single cells, so the result is exact up to
    ``atol`` (default 1e-9 times the diameter of the joint bounding box).
    """
    if len(A) == 0 or len(B) == 0:
        raise ValueError("Hausdorff distance undefined for empty set")
    if A.same_geometry(B):
        return 0.0
    big, small = (A, B) if A.cell_size >= B.cell_size else (B, A)
    k = big.cell_size / small.cell_size
    if abs(k - round(k)) < 1e-9 and big.refined(int(round(k))).same_geometry(small):
        return 0.0
    alo, ahi = A.bounds()
    blo, bhi = B.bounds()
    diam = float(np.linalg.norm(np.maximum(ahi, bhi) - np.minimum(alo, blo)))
    if atol is None:
        atol = 1e-9 * diam
    fa, fb = _DistanceField(A), _DistanceField(B)
    best = _directed_sup(A, fb, 0.0, atol)
    best = _directed_sup(B, fa, best, atol)
    return float(best)


def thicken(A: VoxelSet, r: float, h: float, origin=None) -> VoxelSet:
    """Voxel cover of the open r-neighbourhood of A on a grid of spacing h.

    A fine cell is kept when its box distance to A is below r, so every kept cell
    meets (A)_r and the cells together cover (A)_r.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    d = A.d
    if len(A) == 0:
        return VoxelSet.empty(h, d)
    lo, hi = A.bounds()
    if origin is None:
        origin = lo + 0.5 * h
    origin = np.asarray(origin, dtype=float)
    clo = np.floor((lo - r - origin) / h + 0.5).astype(np.int64) - 1
    chi = np.ceil((hi + r - origin) / h - 0.5).astype(np.int64) + 1
    axes = [np.arange(a, b + 1) for a, b in zip(clo, chi)]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    flo = origin + h * (grid - 0.5)
    fhi = flo + h
    blo, bhi = A.boxes()
    dist2 = np.full(len(grid), np.inf)
    for s in range(0, len(blo), 256):
        g = (np.maximum(blo[None, s:s + 256] - fhi[:, None], 0.0)
             + np.maximum(flo[:, None] - bhi[None, s:s + 256], 0.0))
        dist2 = np.minimum(dist2, np.sum(g * g, axis=-1).min(axis=1))
    return VoxelSet(h, grid[dist2 < r * r], tuple(origin))


def rounded_box_volume(a, b, c, r):
    """Volume of the open r-neighbourhood of an a x b x c box."""
    return a * b * c + 2 * r * (a * b + b * c + c * a) + math.pi * r * r * (a + b + c) + 4.0 / 3.0 * math.pi * r ** 3
