"""Discrete gradients, rigid-motion projection and the spring cell energy.

Cell ``i`` has the 2^d lattice vertices ``i + b`` with ``b`` in {0,1}^d.
Vertex ``l`` is listed in binary-counting order: bit k of l is the offset along
axis k, and the reference column is z_l = b_l - 1/2.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lattice import LatticeDomain, VoidSet, index_bounds


def vertex_offsets(d: int) -> np.ndarray:
    """(2^d, d) integer offsets b_l in binary-counting order."""
    return np.array([[(l >> k) & 1 for k in range(d)] for l in range(2 ** d)], dtype=np.int64)


def reference_cell(d: int) -> np.ndarray:
    """Z: d x 2^d matrix with columns z_l in {-1/2, 1/2}^d."""
    return vertex_offsets(d).T.astype(float) - 0.5


def _skew_basis(d):
    out = []
    for a, b in itertools.combinations(range(d), 2):
        S = np.zeros((d, d))
        S[a, b], S[b, a] = 1.0, -1.0
        out.append(S)
    return out


def rigid_basis(d: int) -> np.ndarray:
    """Orthonormal basis (rows) of span{S Z + (v, ..., v)}, flattened row-major."""
    Z = reference_cell(d)
    gens = [(S @ Z).ravel() for S in _skew_basis(d)]
    for k in range(d):
        T = np.zeros_like(Z)
        T[k] = 1.0
        gens.append(T.ravel())
    q, _ = np.linalg.qr(np.array(gens).T)
    return q.T


_PROJ_CACHE: dict = {}


def projector(d: int) -> np.ndarray:
    if d not in _PROJ_CACHE:
        B = rigid_basis(d)
        _PROJ_CACHE[d] = np.eye(B.shape[1]) - B.T @ B
    return _PROJ_CACHE[d]


def project_rigid_complement(G: np.ndarray) -> np.ndarray:
    """Orthogonal projection of one or many d x 2^d gradients off the rigid subspace."""
    G = np.asarray(G, dtype=float)
    d = G.shape[-2]
    flat = G.reshape(G.shape[:-2] + (-1,))
    return (flat @ projector(d)).reshape(G.shape)


# ---------------------------------------------------------------- displacement


class Displacement:
    """Rescaled displacement u on the U index box.

    Values on Z_eps(U \\ Omega) follow the boundary datum, values on E are zero
    and sites outside U read as zero.
    """

    def __init__(self, domain: LatticeDomain, values=None, boundary_datum: Callable | None = None,
                 E: VoidSet | None = None):
        self.domain = domain
        d = domain.d
        shape = domain.u_shape + (d,)
        self.values = np.zeros(shape) if values is None else np.array(values, dtype=float).reshape(shape)
        self.boundary_datum = boundary_datum
        self.E = E
        self.enforce()

    def site_coordinates(self):
        lo, hi = self.domain.u_index_box
        axes = [np.arange(a, b) for a, b in zip(lo, hi)]
        grid = np.meshgrid(*axes, indexing="ij")
        return self.domain.epsilon * np.stack(grid, axis=-1).astype(float)

    def free_mask(self):
        """Sites of Omega that are not void."""
        m = self.domain.omega_mask()
        if self.E is not None:
            m &= ~self.E.mask()
        return m

    def enforce(self):
        om = self.domain.omega_mask()
        if self.boundary_datum is not None:
            x = self.site_coordinates()
            self.values[~om] = _eval_datum(self.boundary_datum, x[~om])
        else:
            self.values[~om] = 0.0
        if self.E is not None and len(self.E):
            self.values[self.E.mask()] = 0.0
        return self

    @classmethod
    def affine(cls, domain, F, E=None, c=None):
        """u(x) = F x + c on every site, then clamped to the admissible rules."""
        F = np.asarray(F, dtype=float)
        c = np.zeros(domain.d) if c is None else np.asarray(c, dtype=float)
        fn = affine_map(F, c)
        u = cls(domain, None, fn, E)
        x = u.site_coordinates()
        u.values = fn(x.reshape(-1, domain.d)).reshape(u.values.shape)
        return u.enforce()

    @classmethod
    def from_function(cls, domain, fn, E=None, boundary_datum=None):
        u = cls(domain, None, boundary_datum or fn, E)
        x = u.site_coordinates()
        u.values = _eval_datum(fn, x.reshape(-1, domain.d)).reshape(u.values.shape)
        return u.enforce()

    def copy(self):
        return Displacement(self.domain, self.values.copy(), self.boundary_datum, self.E)


def affine_map(F, c=None):
    F = np.asarray(F, dtype=float)
    c = np.zeros(F.shape[0]) if c is None else np.asarray(c, dtype=float)
    return lambda x: np.asarray(x) @ F.T + c


def _eval_datum(fn, x):
    x = np.asarray(x, dtype=float)
    return np.asarray(fn(x.reshape(-1, x.shape[-1])), dtype=float).reshape(x.shape)


def _padded(values):
    """Zero-pad one site above U on every axis so upper cell vertices resolve."""
    d = values.shape[-1]
    return np.pad(values, [(0, 1)] * d + [(0, 0)])


def _cell_differences(values):
    """Vertex displacements (..., 2^d, d) for the cell at every U site."""
    d = values.shape[-1]
    P = _padded(values)
    n = values.shape[:-1]
    cols = []
    for b in vertex_offsets(d):
        sl = tuple(slice(int(o), int(o) + s) for o, s in zip(b, n))
        cols.append(P[sl])
    return np.stack(cols, axis=-2)


def discrete_gradient(u: Displacement, i, delta: float) -> np.ndarray:
    """Columns (y(vertex_l) - mean) / eps with y = id + delta u; returns d x 2^d."""
    d = u.domain.d
    eps = u.domain.epsilon
    Z = reference_cell(d)
    lo = u.domain.u_index_box[0]
    uv = np.zeros((2 ** d, d))
    shape = np.array(u.domain.u_shape)
    for l, b in enumerate(vertex_offsets(d)):
        j = np.asarray(i) + b - lo
        if np.all(j >= 0) and np.all(j < shape):
            uv[l] = u.values[tuple(j)]
    w = uv - uv.mean(axis=0)
    return Z + (delta / eps) * w.T


def gradient_field(u: Displacement, delta: float) -> np.ndarray:
    """Discrete gradient of every cell on the U index box, shape (*u_shape, d, 2^d)."""
    diff = _cell_differences(u.values)
    diff = diff - diff.mean(axis=-2, keepdims=True)
    Z = reference_cell(u.domain.d)
    return Z + (delta / u.domain.epsilon) * np.swapaxes(diff, -1, -2)


def symmetric_discrete_gradient_field(u: Displacement, E: VoidSet | None, delta: float,
                                      scaled=True) -> np.ndarray:
    """P applied to every cell gradient.

    With ``scaled`` the result is divided by delta, so an affine u(x) = F x gives
    sym(F) Z at every cell whose vertices all follow the affine map.
    """
    G = gradient_field(u, delta)
    Z = reference_cell(u.domain.d)
    out = project_rigid_complement(G - Z)
    return out / delta if scaled else out


# ---------------------------------------------------------------- cell energy


def spring_pairs(d: int):
    """Vertex pairs with their rest length, weight and spring index (0 edge, 1 diagonal)."""
    Z = reference_cell(d)
    out = []
    for a, b in itertools.combinations(range(2 ** d), 2):
        dist2 = int(round(np.sum((Z[:, a] - Z[:, b]) ** 2)))
        if dist2 == 1:
            out.append((a, b, 1.0, 1.0 / 2 ** d, 0))
        elif dist2 == 2:
            out.append((a, b, math.sqrt(2.0), 1.0 / 2 ** (d - 1), 1))
    return out


@dataclass(frozen=True)
class CellEnergyModel:
    K1: float = 1.0
    K2: float = 1.0
    chi_penalty: float = 0.0
    surf_scale: float = 1.0

    def __post_init__(self):
        if self.K1 <= 0 or self.K2 <= 0:
            raise ValueError("spring constants must be positive")

    def _pair_arrays(self, d):
        pairs = spring_pairs(d)
        a = np.array([p[0] for p in pairs])
        b = np.array([p[1] for p in pairs])
        L = np.array([p[2] for p in pairs])
        K = np.array([self.K1 if p[4] == 0 else self.K2 for p in pairs])
        w = np.array([p[3] for p in pairs])
        return a, b, L, w * K

    def bulk(self, G) -> np.ndarray:
        """W_bulk of gradients G (..., d, 2^d)."""
        return self.spring_sum(G)

    def spring_sum(self, G, present=None):
        """Spring energy; ``present`` (..., 2^d) keeps only pairs with both ends set."""
        G = np.asarray(G, dtype=float)
        d = G.shape[-2]
        a, b, L, wk = self._pair_arrays(d)
        Z = reference_cell(d)
        r = (Z[:, a] - Z[:, b]).T
        w = np.swapaxes(G[..., :, a] - G[..., :, b], -1, -2) - r
        # |r + w| - L computed without cancellation near the rest state
        num = 2.0 * np.sum(r * w, axis=-1) + np.sum(w * w, axis=-1)
        stretch = num / (np.linalg.norm(r + w, axis=-1) + L)
        terms = 0.5 * wk * stretch ** 2
        if present is not None:
            present = np.asarray(present, dtype=bool)
            terms = terms * (present[..., a] & present[..., b])
        out = terms.sum(axis=-1)
        if self.chi_penalty:
            out = out + self.chi_penalty * (~orientation_ok(G))
        return out

    def surface(self, G, present):
        return self.surf_scale * self.spring_sum(G, present)


def orientation_ok(G) -> np.ndarray:
    """True when every corner simplex of the deformed cell is positively oriented."""
    G = np.asarray(G, dtype=float)
    d = G.shape[-2]
    offs = vertex_offsets(d)
    ok = np.ones(G.shape[:-2], dtype=bool)
    for l in range(2 ** d):
        nbrs = [l ^ (1 << k) for k in range(d)]
        sign = np.prod([1 if offs[l][k] == 0 else -1 for k in range(d)])
        M = np.stack([G[..., :, m] - G[..., :, l] for m in nbrs], axis=-1)
        ok &= sign * np.linalg.det(M) > 0
    return ok


def neighbour_slots(domain: LatticeDomain, E: VoidSet | None) -> np.ndarray:
    """(*u_shape, 2^d) flags: vertex l of the cell at each site lies in Z_eps(U) \\ E."""
    d = domain.d
    occ = np.ones(domain.u_shape, dtype=bool)
    if E is not None and len(E):
        occ &= ~E.mask()
    P = np.pad(occ, [(0, 1)] * d)
    cols = []
    for b in vertex_offsets(d):
        cols.append(P[tuple(slice(int(o), int(o) + s) for o, s in zip(b, domain.u_shape))])
    return np.stack(cols, axis=-1)


def cell_energy(model: CellEnergyModel, i, u: Displacement, E: VoidSet | None, delta: float) -> float:
    dom = u.domain
    if not bool(dom.in_omega([i])[0]) or (E is not None and tuple(i) in E):
        raise ValueError("not an occupied site")
    G = discrete_gradient(u, i, delta)
    slots = neighbour_slots(dom, E)[tuple(np.asarray(i) - dom.u_index_box[0])]
    if slots.all():
        return float(model.bulk(G))
    return float(model.surface(G, slots))


def _cell_energies(model, u, E, delta):
    G = gradient_field(u, delta)
    slots = neighbour_slots(u.domain, E)
    full = slots.all(axis=-1)
    W = np.where(full, model.spring_sum(G), model.surf_scale * model.spring_sum(G, slots))
    return W


def _region_mask(domain, E, region):
    """Cells summed by the energy: sites of ``region`` (default Omega) not in E."""
    if region is None:
        m = domain.omega_mask()
    else:
        lo, hi = index_bounds(domain.epsilon, region)
        ulo = domain.u_index_box[0]
        m = np.zeros(domain.u_shape, dtype=bool)
        m[tuple(slice(max(int(a - c), 0), max(int(b - c), 0)) for a, b, c in zip(lo, hi, ulo))] = True
    if E is not None and len(E):
        m &= ~E.mask()
    return m


def elastic_energy(model: CellEnergyModel, u: Displacement, E: VoidSet | None, delta: float,
                   region=None) -> float:
    """delta^-2 * sum over occupied sites of ``region`` (default Omega) of eps^d * cell energy."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    W = _cell_energies(model, u, E, delta)
    m = _region_mask(u.domain, E, region)
    # C-order traversal of the mask is lexicographic in the site index
    return math.fsum(W[m].tolist()) * u.domain.epsilon ** u.domain.d / delta ** 2


def dirichlet_region(domain: LatticeDomain):
    """Omega grown by one site on the lower faces, clipped to U.

    Cell i has its vertices at i + {0,1}^d, so cells labelled by sites of Omega
    only reach the Dirichlet layer above Omega. Adding the lower layer makes
    the clamp act on every face.
    """
    lo = np.maximum(np.asarray(domain.omega[0]) - domain.epsilon, domain.u_set[0])
    return lo, np.asarray(domain.omega[1])


def elastic_energy_and_gradient(model, u: Displacement, E, delta, region=None):
    """Energy and its derivative with respect to every site value of u."""
    dom = u.domain
    d = dom.d
    eps = dom.epsilon
    G = gradient_field(u, delta)
    slots = neighbour_slots(dom, E)
    full = slots.all(axis=-1)
    mask = _region_mask(dom, E, region)
    a, b, L, wk = model._pair_arrays(d)
    Z = reference_cell(d)
    r = (Z[:, a] - Z[:, b]).T
    diff = np.swapaxes(G[..., :, a] - G[..., :, b], -1, -2)
    w = diff - r
    norm = np.linalg.norm(diff, axis=-1)
    stretch = (2.0 * np.sum(r * w, axis=-1) + np.sum(w * w, axis=-1)) / (norm + L)
    scale = np.where(full, 1.0, model.surf_scale)[..., None] * wk
    live = np.where(full[..., None], True, slots[..., a] & slots[..., b])
    coef = np.where(live, scale, 0.0) * mask[..., None]
    energy_cells = 0.5 * np.sum(coef * stretch ** 2, axis=-1)
    if model.chi_penalty:
        energy_cells = energy_cells + model.chi_penalty * (~orientation_ok(G)) * mask
    energy = math.fsum(energy_cells[mask].tolist()) * eps ** d / delta ** 2
    # dW/dG_a = coef * stretch * diff/|diff|, dW/dG_b the negative
    f = (coef * stretch / np.maximum(norm, 1e-300))[..., None] * diff
    gG = np.zeros(G.shape[:-2] + (2 ** d, d))
    for p in range(len(a)):
        gG[..., a[p], :] += f[..., p, :]
        gG[..., b[p], :] -= f[..., p, :]
    # columns are (delta/eps)(u_l - mean); the mean term drops since sum_l gG_l = 0
    gG *= (delta / eps) * eps ** d / delta ** 2
    grad = np.zeros(_padded(u.values).shape)
    n = u.values.shape[:-1]
    for l, off in enumerate(vertex_offsets(d)):
        grad[tuple(slice(int(o), int(o) + s) for o, s in zip(off, n))] += gG[..., l, :]
    return energy, grad[tuple(slice(0, s) for s in n)]


# ---------------------------------------------------------------- linearisation


@dataclass
class QuadraticFormBulk:
    hessian: np.ndarray
    fd_step: float

    def __call__(self, G):
        return evaluate_q_bulk(self, G)


def q_bulk(model: CellEnergyModel, d: int = 3, fd_step: float = 1e-4) -> QuadraticFormBulk:
    """Central-difference Hessian of W_bulk at Z with one Richardson refinement."""
    Z = reference_cell(d)
    n = Z.size

    def W(x):
        return float(model.bulk(x.reshape(Z.shape)))

    def hess(h):
        H = np.zeros((n, n))
        z = Z.ravel()
        for p in range(n):
            for q in range(p, n):
                ep = np.zeros(n)
                eq = np.zeros(n)
                ep[p] = h
                eq[q] = h
                val = (W(z + ep + eq) - W(z + ep - eq) - W(z - ep + eq) + W(z - ep - eq)) / (4 * h * h)
                H[p, q] = H[q, p] = val
        return H

    H = (4.0 * hess(fd_step / 2) - hess(fd_step)) / 3.0
    return QuadraticFormBulk(0.5 * (H + H.T), fd_step)


def evaluate_q_bulk(Q: QuadraticFormBulk, G) -> float:
    g = np.asarray(G, dtype=float).ravel()
    return float(g @ Q.hessian @ g)


def q_bulk_exact(model: CellEnergyModel, G) -> float:
    """Closed form of the spring Hessian: sum_p w_p K_p (unit(r_p) . (G_a - G_b))^2."""
    G = np.asarray(G, dtype=float)
    d = G.shape[-2]
    a, b, L, wk = model._pair_arrays(d)
    Z = reference_cell(d)
    r = (Z[:, a] - Z[:, b]).T / L[:, None]
    diff = np.swapaxes(G[..., :, a] - G[..., :, b], -1, -2)
    return float(np.sum(wk * np.sum(r * diff, axis=-1) ** 2))


# ---------------------------------------------------------------- minimisation


@dataclass
class SolverParams:
    tol: float = 1e-8
    max_iter: int = 2000
    init: str = "affine"
    armijo: float = 1e-4
    shrink: float = 0.5


@dataclass
class MinimizeResult:
    u: Displacement
    energy: float
    initial_energy: float
    iterations: int
    grad_norm: float
    converged: bool


def minimize_elastic(model: CellEnergyModel, domain: LatticeDomain, E: VoidSet | None, u0: Callable,
                     delta: float, params: SolverParams | None = None, region=None) -> MinimizeResult:
    """Nonlinear conjugate gradient (Polak-Ribiere+) with backtracking on free sites.

    The start is the admissible extension of u0 (``init='affine'``) or zero on the
    free sites (``init='zero'``). Energies never increase, so the returned energy
    is at most that of the starting candidate. ``region`` selects the summed
    cells as in :func:`elastic_energy`; :func:`dirichlet_region` clamps all faces.
    """
    params = params or SolverParams()
    if params.init == "affine":
        u = Displacement.from_function(domain, u0, E)
    elif params.init == "zero":
        u = Displacement(domain, None, u0, E)
    else:
        raise ValueError(f"unknown init {params.init!r}")
    free = u.free_mask()
    x = u.values[free].ravel().copy()

    def fg(xv):
        u.values[free] = xv.reshape(-1, domain.d)
        e, g = elastic_energy_and_gradient(model, u, E, delta, region)
        if not np.isfinite(e):
            raise FloatingPointError("divergent step")
        return e, g[free].ravel()

    e, g = fg(x)
    e0 = e
    p = -g
    it = 0
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    step = 1.0
    while it < params.max_iter and gnorm >= params.tol:
        slope = float(g @ p)
        if slope >= 0:
            p = -g
            slope = -float(g @ g)
        t = step
        e_new, g_new = fg(x + t * p)
        s_new = float(g_new @ p)
        if s_new > slope:
            # secant step on the directional derivative, exact for quadratics
            ts = t * slope / (slope - s_new)
            e_s, g_s = fg(x + ts * p)
            if e_s <= e_new:
                t, e_new, g_new, s_new = ts, e_s, g_s, float(g_s @ p)
        noise = 64 * np.finfo(float).eps * max(abs(e), 1e-300)
        while True:
            if e_new <= e + params.armijo * t * slope:
                break
            # energy differences below rounding: fall back to the derivative
            if abs(e_new - e) <= noise and abs(s_new) <= 0.5 * abs(slope):
                break
            t *= params.shrink
            if t < 1e-30:
                t = 0.0
                break
            e_new, g_new = fg(x + t * p)
            s_new = float(g_new @ p)
        if t == 0.0:
            if np.array_equal(p, -g):
                break
            p = -g
            continue
        x = x + t * p
        beta = max(0.0, float(g_new @ (g_new - g)) / max(float(g @ g), 1e-300))
        p = -g_new + beta * p
        step = min(2.0 * t, 1e6)
        e, g = e_new, g_new
        gnorm = float(np.max(np.abs(g)))
        it += 1
    u.values[free] = x.reshape(-1, domain.d)
    return MinimizeResult(u, e, e0, it, gnorm, gnorm < params.tol)


# ---------------------------------------------------------------- discrete vs affine


def cube_simplices(d: int):
    """Simplices of the cube triangulation as tuples of node labels.

    Nodes are vertices ``('v', l)`` and centres of faces ``('c', axes, values)``;
    the cube centre has no fixed axes. Each simplex cones the centre over a
    simplex of one facet, recursively, giving 2d * n_{d-1} simplices.
    """
    def rec(fixed):
        free = [k for k in range(d) if k not in fixed]
        centre = ("c", tuple(sorted(fixed.items())))
        if len(free) == 1:
            k = free[0]
            ends = []
            for s in (0, 1):
                f = dict(fixed)
                f[k] = s
                ends.append(("v", tuple(sorted(f.items()))))
            return [tuple(ends)]
        out = []
        for k in free:
            for s in (0, 1):
                f = dict(fixed)
                f[k] = s
                for simp in rec(f):
                    out.append((centre,) + simp)
        return out

    return rec({})


def _node_weights(node, d):
    """Weights on the 2^d vertex values giving the node value (vertex or face mean)."""
    offs = vertex_offsets(d)
    fixed = dict(node[1])
    sel = np.array([all(o[k] == v for k, v in fixed.items()) for o in offs], dtype=float)
    return sel / sel.sum()


def _node_position(node, d):
    fixed = dict(node[1])
    return np.array([fixed.get(k, 0.5) for k in range(d)], dtype=float)


def piecewise_affine_energy_matrix(d: int) -> np.ndarray:
    """M with mean over the cell of |grad u~|^2 = sum_k v_k^T M v_k for vertex values v_k."""
    M = np.zeros((2 ** d, 2 ** d))
    simplices = cube_simplices(d)
    for simp in simplices:
        X = np.array([_node_position(n, d) for n in simp])
        W = np.array([_node_weights(n, d) for n in simp])
        # gradient of the affine interpolant: solve (X_j - X_0) . g = v_j - v_0
        A = X[1:] - X[0]
        D = W[1:] - W[0]
        T = np.linalg.solve(A, D)
        vol = abs(np.linalg.det(A)) / math.factorial(d)
        M += vol * T.T @ T
    return M


def gradient_comparison_constant(d: int) -> float:
    """Smallest C with |grad-bar u|^2 <= C * mean |grad u~|^2 on a unit cell.

    Both sides are quadratic in the vertex values and vanish on constants, so C is
    the largest generalised eigenvalue on the mean-free subspace.
    """
    n = 2 ** d
    Pm = np.eye(n) - np.ones((n, n)) / n
    M = piecewise_affine_energy_matrix(d)
    basis = np.linalg.svd(Pm)[0][:, : n - 1]
    A = basis.T @ Pm @ basis
    B = basis.T @ M @ basis
    L = np.linalg.cholesky(B)
    Li = np.linalg.inv(L)
    return float(np.linalg.eigvalsh(Li @ A @ Li.T).max())


def discrete_and_affine_gradients(values) -> tuple[float, float]:
    """(|grad-bar u|^2, mean |grad u~|^2) for vertex values (2^d, m) on a unit cell."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    d = int(round(math.log2(n)))
    w = v - v.mean(axis=0)
    M = piecewise_affine_energy_matrix(d)
    return float(np.sum(w * w)), float(np.einsum("im,ij,jm->", v, M, v))
