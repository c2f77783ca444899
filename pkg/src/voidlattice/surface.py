"""Anisotropic discrete perimeter and the induced continuum density."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeDomain, VoidSet, VoxelSet, index_bounds


@dataclass(frozen=True)
class NeighborModel:
    vectors: tuple
    coeffs: tuple

    def __post_init__(self):
        V = np.asarray(self.vectors, dtype=np.int64)
        c = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if V.ndim != 2 or V.shape[0] != c.size:
            raise ValueError("one coefficient per neighbour vector is required")
        d = V.shape[1]
        keys = {tuple(v): float(w) for v, w in zip(V.tolist(), c)}
        if len(keys) != len(V):
            raise ValueError("duplicate neighbour vectors")
        for v, w in keys.items():
            if not any(v):
                raise ValueError("zero neighbour vector")
            if max(abs(x) for x in v) > 1:
                raise ValueError(f"neighbour {v} has sup-norm above 1")
            if w <= 0:
                raise ValueError(f"coefficient of {v} must be positive")
            neg = tuple(-x for x in v)
            if neg not in keys or not math.isclose(keys[neg], w):
                raise ValueError(f"neighbour set not symmetric at {v}")
        for k in range(d):
            e = tuple(int(j == k) for j in range(d))
            if e not in keys:
                raise ValueError(f"unit vector {e} missing")
        order = sorted(keys)
        object.__setattr__(self, "vectors", tuple(order))
        object.__setattr__(self, "coeffs", tuple(keys[v] for v in order))

    @property
    def d(self):
        return len(self.vectors[0])

    @classmethod
    def nearest(cls, d=3, c=1.0):
        vecs = []
        for k in range(d):
            for s in (-1, 1):
                vecs.append(tuple(s * int(j == k) for j in range(d)))
        return cls(tuple(vecs), tuple([c] * len(vecs)))

    @classmethod
    def nearest_and_diagonal(cls, d=3, c1=1.0, c2=1.0):
        """{+-e_k} with weight c1 and {+-e_k +- e_l} with weight c2."""
        vecs, cs = [], []
        for v in itertools.product((-1, 0, 1), repeat=d):
            n = sum(abs(x) for x in v)
            if n == 1:
                vecs.append(v)
                cs.append(c1)
            elif n == 2:
                vecs.append(v)
                cs.append(c2)
        return cls(tuple(vecs), tuple(cs))

    @classmethod
    def from_mapping(cls, mapping):
        items = sorted(mapping.items())
        return cls(tuple(tuple(k) for k, _ in items), tuple(v for _, v in items))

    def axis_coefficients(self) -> np.ndarray:
        """c_k = sum of c_xi over xi with positive k-th entry."""
        V = np.asarray(self.vectors)
        c = np.asarray(self.coeffs)
        return np.array([math.fsum(c[V[:, k] > 0].tolist()) for k in range(self.d)])


def load_neighbor_model(path) -> NeighborModel:
    """Text format: one neighbour per line, d integers followed by the coefficient."""
    mapping = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                v = tuple(int(x) for x in parts[:-1])
                mapping[v] = float(parts[-1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: cannot parse neighbour line") from exc
    return NeighborModel.from_mapping(mapping)


def density_phi(model: NeighborModel, nu) -> float:
    nu = np.asarray(nu, dtype=float)
    n = float(np.linalg.norm(nu))
    if n == 0:
        raise ValueError("normal must be nonzero")
    if abs(n - 1.0) > 1e-12:
        raise ValueError("normal must have unit length")
    return float(np.dot(model.axis_coefficients(), np.abs(nu)))


def _shift(mask, v, fill):
    """out[x] = mask[x + v] with ``fill`` outside."""
    out = np.full(mask.shape, fill, dtype=mask.dtype)
    src, dst = [], []
    for n, s in zip(mask.shape, v):
        s = int(s)
        if s >= 0:
            src.append(slice(s, n))
            dst.append(slice(0, n - s))
        else:
            src.append(slice(0, n + s))
            dst.append(slice(-s, n))
    out[tuple(dst)] = mask[tuple(src)]
    return out


def broken_bond_field(E: VoidSet, model: NeighborModel) -> np.ndarray:
    """(len(V),) + u_shape array: 1 where site i is in E and i+xi is in Z(U) \\ E."""
    m = E.mask()
    out = np.zeros((len(model.vectors),) + m.shape, dtype=np.int8)
    for k, v in enumerate(model.vectors):
        out[k] = m & _shift(np.ones_like(m), v, False) & ~_shift(m, v, False)
    return out


def region_slices(dom, region):
    """Slices of the U-array covering the sites of a half-open box."""
    lo, hi = index_bounds(dom.epsilon, region)
    ulo = dom.u_index_box[0]
    return tuple(slice(max(int(a - c), 0), max(int(b - c), 0)) for a, b, c in zip(lo, hi, ulo))


def perimeter_from_counts(model: NeighborModel, counts, eps, d) -> float:
    return math.fsum((np.asarray(model.coeffs) * np.asarray(counts)).tolist()) * eps ** (d - 1)


def broken_bond_counts(E: VoidSet, model: NeighborModel, region=None) -> np.ndarray:
    """Per neighbour vector, the number of pairs (i, i+xi) with i in E and i+xi in Z(U) \\ E."""
    f = broken_bond_field(E, model)
    if region is not None:
        f = f[(slice(None),) + region_slices(E.domain, region)]
    return f.reshape(len(model.vectors), -1).sum(axis=1, dtype=np.int64)


def discrete_perimeter(E: VoidSet, model: NeighborModel, region=None) -> float:
    """sum over i in E (within region) and xi in V with i + eps xi in Z(U) of eps^(d-1) c_xi (1 - chi_E)."""
    if model.d != E.domain.d:
        raise ValueError("neighbour model and void set differ in dimension")
    counts = broken_bond_counts(E, model, region)
    return perimeter_from_counts(model, counts, E.domain.epsilon, E.domain.d)


def exposed_faces(A: VoxelSet):
    """Face centres and normal axes of the faces of A between a cell and a non-cell."""
    if len(A) == 0:
        return np.zeros((0, A.d)), np.zeros(0, dtype=np.int64)
    m, lo = A.occupancy()
    p = np.pad(m, 1)
    centres, axes = [], []
    for k in range(A.d):
        for s in (-1, 1):
            nb = np.roll(p, -s, axis=k)
            cells = np.argwhere(p & ~nb) - 1 + lo
            c = np.asarray(A.origin) + A.cell_size * cells.astype(float)
            c[:, k] += 0.5 * s * A.cell_size
            centres.append(c)
            axes.append(np.full(len(cells), k))
    return np.concatenate(centres), np.concatenate(axes)


def continuum_perimeter(A: VoxelSet, model: NeighborModel, region=None) -> float:
    """Per_phi of a voxel union: sum over exposed faces of c_k * cell_size^(d-1)."""
    if len(A) == 0:
        return 0.0
    centres, axes = exposed_faces(A)
    if region is not None:
        lo, hi = region
        keep = np.all((centres >= np.asarray(lo)) & (centres < np.asarray(hi)), axis=1)
        axes = axes[keep]
    ck = model.axis_coefficients()
    per_axis = np.bincount(axes, minlength=A.d)
    return math.fsum((ck * per_axis).tolist()) * A.cell_size ** (A.d - 1)


def recovery_limsup_check(E: VoxelSet, model: NeighborModel, omega, eps_list, eta_list, pad=None):
    """Rows (eps, eta, F_per(E_eps), Per_phi(E), gap) along a sequence of scales.

    ``E`` is a union of cubes; the recovered void set at each scale keeps the
    lattice sites of every centred eta-cube whose centre lies in E.
    """
    from .gamma import recovery_sequence

    lo, hi = np.asarray(omega[0], dtype=float), np.asarray(omega[1], dtype=float)
    if len(E):
        blo, bhi = E.bounds()
        if np.any(blo <= lo) or np.any(bhi >= hi):
            raise ValueError("recovery requires E compactly inside omega")
    target = continuum_perimeter(E, model)
    rows = []
    for eps, eta in zip(eps_list, eta_list):
        dom = LatticeDomain.box(eps, lo, hi, pad=eps if pad is None else pad)
        n = int(round(eta / eps))
        Ee = recovery_sequence(E, dom, n)
        F = discrete_perimeter(Ee, model)
        rows.append(dict(eps=eps, eta=eta, F_per=F, Per_phi=target, gap=abs(F - target)))
    return rows
