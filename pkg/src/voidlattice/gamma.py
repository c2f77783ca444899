"""Scaling regimes, recovery sequences and convergence tables."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .curvature import CurvatureModel, curvature_energy, window_offsets
from .elastic import (CellEnergyModel, Displacement, SolverParams, dirichlet_region, elastic_energy,
                      minimize_elastic, q_bulk_exact, reference_cell, symmetric_discrete_gradient_field)
from .lattice import LatticeDomain, VoidSet, VoxelSet, index_bounds
from .mesoscale import block_sites
from .surface import NeighborModel, continuum_perimeter, discrete_perimeter


class RegimeError(ValueError):
    """A scaling regime breaks one of the monitored trends."""

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("regime rejected: " + "; ".join(self.failures))


# (name, expected direction) of each monitored quantity
MONITORS = (
    ("eta/eps", "increasing"),
    ("eta", "decreasing"),
    ("gamma*eta^-q", "increasing"),
    ("gamma*eta^(1-q)", "decreasing"),
    ("gamma*delta^(-q/9)", "increasing"),
)


@dataclass
class ScalingRegime:
    eps: np.ndarray
    delta: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    q: float = 2.0

    def __post_init__(self):
        self.eps = np.asarray(self.eps, dtype=float)
        self.delta = np.asarray(self.delta, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        n = self.eps.size
        if not all(a.size == n for a in (self.delta, self.eta, self.gamma)):
            raise ValueError("regime columns have different lengths")
        if self.q < 2:
            raise ValueError("q must be at least 2")
        r = self.eta / self.eps
        if np.any(np.abs(r - np.round(r)) > 1e-9) or np.any(np.round(r) < 1):
            raise ValueError("eta must be a positive integer multiple of eps")

    def __len__(self):
        return int(self.eps.size)

    @property
    def ratio(self):
        return np.round(self.eta / self.eps).astype(np.int64)

    def monitors(self) -> dict:
        q = self.q
        return {
            "eta/eps": self.ratio.astype(float),
            "eta": self.eta,
            "gamma*eta^-q": self.gamma * self.eta ** (-q),
            "gamma*eta^(1-q)": self.gamma * self.eta ** (1 - q),
            "gamma*delta^(-q/9)": self.gamma * self.delta ** (-q / 9),
        }

    def failures(self) -> list:
        out = []
        mon = self.monitors()
        for name, trend in MONITORS:
            v = mon[name]
            step = np.diff(v)
            bad = np.flatnonzero(step <= 0 if trend == "increasing" else step >= 0)
            if bad.size:
                k = int(bad[0])
                out.append(f"{name} not strictly {trend} between eps={self.eps[k]:.6g} and eps={self.eps[k + 1]:.6g}")
        return out

    def validate(self):
        f = self.failures()
        if f:
            raise RegimeError(f)
        return self

    def rows(self):
        mon = self.monitors()
        for k in range(len(self)):
            row = dict(eps=self.eps[k], delta=self.delta[k], eta=self.eta[k], gamma=self.gamma[k])
            row.update({name: mon[name][k] for name, _ in MONITORS})
            yield row

    def curvature_model(self, k, mode="generic") -> CurvatureModel:
        return CurvatureModel(float(self.gamma[k]), float(self.eta[k]), self.q, mode)


def _check_sequence(eps):
    eps = np.asarray(eps, dtype=float)
    if eps.ndim != 1 or eps.size < 3:
        raise ValueError("eps sequence needs at least 3 entries")
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValueError("eps sequence must be positive and strictly decreasing")
    return eps


def mesoscale_exponent(q, frac=0.1):
    """Exponent m with eps^(q/(q-1)/18) << eps^m << eps^(1/18), placed ``frac`` into the window."""
    lo = 1.0 / 18
    hi = q / (18.0 * (q - 1))
    return lo + frac * (hi - lo)


def suggest_regime(eps_sequence, q=2.0, s=0.9, frac=0.1) -> ScalingRegime:
    """delta = sqrt(eps), eta = eps * round(eps^(m-1)), gamma = eta^(q-s).

    With gamma a power of eta the two eta-monitors become eta^-s and eta^(1-s),
    so they are monotone as soon as eta is. ``frac`` places m inside its window.
    """
    if q < 2:
        raise ValueError("q must be at least 2")
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    eps = _check_sequence(eps_sequence)
    m = mesoscale_exponent(q, frac)
    ratio = np.maximum(np.round(eps ** (m - 1.0)), 1.0)
    eta = eps * ratio
    reg = ScalingRegime(eps, np.sqrt(eps), eta, eta ** (q - s), q)
    return reg.validate()


def desk_regime(eps_sequence, eta_sequence, q=2.0, gamma0=1.0, rate=0.9) -> ScalingRegime:
    """Regime for desk-size recovery runs: eta given, gamma chosen so gamma*eta^(1-q) ~ eps^rate.

    Not validated: eta/eps stays small at reachable eps, so the asymptotic
    monitors need not hold row over row.
    """
    eps = _check_sequence(eps_sequence)
    eta = np.asarray(eta_sequence, dtype=float)
    gamma = gamma0 * (eps / eps[0]) ** rate * eta ** (q - 1)
    return ScalingRegime(eps, np.sqrt(eps), eta, gamma, q)


# ---------------------------------------------------------------- continuum-side sets


def _commensurate(E: VoxelSet, size):
    k = size / E.cell_size
    if abs(k - round(k)) > 1e-9 or round(k) < 1:
        raise ValueError("coarse size must be an integer multiple of the cell size")
    return int(round(k))


def coordinate_normal_approximation(E: VoxelSet, sigma: float) -> VoxelSet:
    """Union of the cubes sigma * (k + [0,1)^d) lying entirely inside E."""
    d = E.d
    if len(E) == 0:
        return VoxelSet.empty(sigma, d)
    k = _commensurate(E, sigma)
    corner = np.asarray(E.origin) - 0.5 * E.cell_size
    shift = corner / E.cell_size
    if not np.allclose(shift, np.round(shift), atol=1e-7):
        raise ValueError("fine grid corners must lie on the lattice cell_size * Z^d")
    shift = np.round(shift).astype(np.int64)
    m, lo = E.occupancy()
    g = lo + shift  # global fine index of m[0,...,0], corner at cell_size * g
    start = np.floor_divide(g, k) * k
    pre = g - start
    total = pre + np.array(m.shape)
    stop = -(-total // k) * k
    big = np.zeros(tuple(int(v) for v in stop), dtype=bool)
    big[tuple(slice(int(a), int(a + s)) for a, s in zip(pre, m.shape))] = m
    shape = []
    for s in big.shape:
        shape += [s // k, k]
    full = big.reshape(shape).all(axis=tuple(range(1, 2 * d, 2)))
    cells = np.argwhere(full) + start // k
    return VoxelSet(sigma, cells, tuple(np.full(d, 0.5 * sigma)))


def _common_grid(A: VoxelSet, B: VoxelSet):
    h = min(A.cell_size, B.cell_size)
    out = []
    for S in (A, B):
        k = S.cell_size / h
        if abs(k - round(k)) > 1e-9:
            raise ValueError("cell sizes are not commensurate")
        out.append(S.refined(int(round(k))) if round(k) > 1 else S)
    a, b = out
    off = (np.asarray(b.origin) - np.asarray(a.origin)) / h
    if not np.allclose(off, np.round(off), atol=1e-7):
        raise ValueError("grids are not aligned")
    return a, b, np.round(off).astype(np.int64), h


def symmetric_difference_volume(A: VoxelSet, B: VoxelSet) -> float:
    if len(A) == 0 or len(B) == 0:
        return A.volume + B.volume
    a, b, off, h = _common_grid(A, B)
    sa = set(map(tuple, a.cells.tolist()))
    sb = set(map(tuple, (b.cells + off).tolist()))
    return len(sa ^ sb) * h ** A.d


def recovery_sequence(E: VoxelSet, domain: LatticeDomain, n: int, strict=False) -> VoidSet:
    """Sites of every centred (n eps)-cube whose centre lies in E, intersected with Omega.

    With ``strict`` the union of the kept cubes must reproduce E exactly.
    """
    d = domain.d
    if E.d != d:
        raise ValueError("void set and domain differ in dimension")
    if len(E) == 0:
        return VoidSet(domain)
    eta = n * domain.epsilon
    lo, hi = E.bounds()
    blo = np.floor(lo / eta).astype(np.int64) - 1
    bhi = np.ceil(hi / eta).astype(np.int64) + 1
    grid = np.array(list(itertools.product(*[range(int(a), int(b) + 1) for a, b in zip(blo, bhi)])),
                    dtype=np.int64)
    blocks = grid[E.contains_points(eta * grid.astype(float))]
    if strict:
        jlo, _ = window_offsets(n)
        kept = VoxelSet(eta, blocks, tuple(np.full(d, domain.epsilon * (jlo + 0.5 * n - 0.5))))
        if not math.isclose(symmetric_difference_volume(kept, E), 0.0, abs_tol=1e-15):
            raise ValueError("E is not eta-aligned")
    return VoidSet(domain, block_sites(domain, blocks, n))


# ---------------------------------------------------------------- edge skeleton


def edge_skeleton(E: VoxelSet):
    """Segments (as degenerate boxes lo, hi) where the boundary of E is not locally flat.

    In 3D these are the convex and concave edges of the voxel union; in 2D the
    corner points. Returns (lo, hi, measure) with measure = H^(d-2) of the union.
    """
    d = E.d
    if len(E) == 0:
        return np.zeros((0, d)), np.zeros((0, d)), 0.0
    m, lo = E.occupancy()
    p = np.pad(m, 1)
    h = E.cell_size
    base = np.asarray(E.origin) + h * (lo - 1)  # centre of p[0, ..., 0]
    los, his = [], []
    axes = [None] if d == 2 else list(range(d))
    for a in axes:
        others = [b for b in range(d) if b != a]
        sl = lambda i, j: tuple(
            slice(None) if b == a else (slice(0, -1) if (i if b == others[0] else j) == 0 else slice(1, None))
            for b in range(d))
        c00, c01, c10, c11 = p[sl(0, 0)], p[sl(0, 1)], p[sl(1, 0)], p[sl(1, 1)]
        s = c00.astype(int) + c01 + c10 + c11
        diag = (c00 & c11 & ~c01 & ~c10) | (c01 & c10 & ~c00 & ~c11)
        hit = np.argwhere((s == 1) | (s == 3) | diag)
        # grid line between p[j-?] cells: index j in the sliced array sits between p[j] and p[j+1]
        pt = base + h * hit.astype(float)
        for b in others:
            pt[:, b] += 0.5 * h
        seg_lo = pt.copy()
        seg_hi = pt.copy()
        if a is not None:
            seg_lo[:, a] -= 0.5 * h
            seg_hi[:, a] += 0.5 * h
        los.append(seg_lo)
        his.append(seg_hi)
    lo_, hi_ = np.concatenate(los), np.concatenate(his)
    measure = float(len(lo_) * (h if d == 3 else 1.0))
    return lo_, hi_, measure


def sites_near_skeleton(domain: LatticeDomain, seg_lo, seg_hi, radius) -> int:
    """Number of sites of Z_eps(Omega) within ``radius`` of the skeleton."""
    if len(seg_lo) == 0:
        return 0
    eps = domain.epsilon
    olo, ohi = domain.omega_index_box
    mark = np.zeros(tuple(int(v) for v in ohi - olo), dtype=bool)
    for a, b in zip(seg_lo, seg_hi):
        ilo = np.maximum(np.floor((a - radius) / eps).astype(np.int64), olo)
        ihi = np.minimum(np.ceil((b + radius) / eps).astype(np.int64) + 1, ohi)
        if np.any(ihi <= ilo):
            continue
        axes = [np.arange(x, y) * eps for x, y in zip(ilo, ihi)]
        gap2 = 0.0
        for k, ax in enumerate(axes):
            g = np.maximum(np.maximum(a[k] - ax, ax - b[k]), 0.0) ** 2
            shape = [1] * len(axes)
            shape[k] = -1
            gap2 = gap2 + g.reshape(shape)
        near = gap2 <= radius ** 2 * (1 + 1e-12)
        sub = tuple(slice(int(x - o), int(y - o)) for x, y, o in zip(ilo, ihi, olo))
        mark[sub] |= near
    return int(np.count_nonzero(mark))


# ---------------------------------------------------------------- experiments


@dataclass
class ExperimentModels:
    neighbors: NeighborModel
    cells: CellEnergyModel | None = None
    strain: np.ndarray | None = None  # affine displacement gradient for the elastic columns
    curvature_mode: str = "generic"


def _elastic_columns(models, domain, E_eps, E: VoxelSet, delta, omega):
    if models.cells is None or models.strain is None:
        return math.nan, math.nan
    F = np.asarray(models.strain, dtype=float)
    u = cell_averaged_displacement(domain, lambda x: x @ F.T, E_eps)
    el = elastic_energy(models.cells, u, E_eps, delta)
    lo, hi = np.asarray(omega[0]), np.asarray(omega[1])
    solid = float(np.prod(hi - lo)) - E.volume
    limit = 0.5 * q_bulk_exact(models.cells, 0.5 * (F + F.T) @ reference_cell(domain.d)) * solid
    return el, limit


def cell_averaged_displacement(domain, fn, E=None, points=4):
    """u(i) = average of fn over Q_eps(i), by a tensor midpoint rule with ``points``^d nodes."""
    d = domain.d
    eps = domain.epsilon
    u = Displacement(domain, None, None, E)
    x = u.site_coordinates().reshape(-1, d)
    nodes = (np.arange(points) + 0.5) / points - 0.5
    acc = np.zeros_like(x)
    for off in itertools.product(nodes, repeat=d):
        acc += fn(x + eps * np.asarray(off))
    u.values = (acc / points ** d).reshape(u.values.shape)
    u.boundary_datum = None
    om = domain.omega_mask()
    keep = u.values.copy()
    u.enforce()
    u.values[~om] = keep[~om]  # boundary layer keeps the averaged datum
    if E is not None and len(E):
        u.values[E.mask()] = 0.0
    return u


def gamma_limsup_experiment(E: VoxelSet, regime: ScalingRegime, models: ExperimentModels, omega, pad=None):
    """Rows of the recovery table; the curvature bound constant is fixed from the first row."""
    lo, hi = np.asarray(omega[0], dtype=float), np.asarray(omega[1], dtype=float)
    if len(E):
        blo, bhi = E.bounds()
        if np.any(blo <= lo) or np.any(bhi >= hi):
            raise ValueError("recovery requires E compactly inside omega")
    per_phi = continuum_perimeter(E, models.neighbors) if len(E) else 0.0
    seg_lo, seg_hi, skel = edge_skeleton(E)
    rows = []
    C0 = None
    for k in range(len(regime)):
        eps = float(regime.eps[k])
        n = int(regime.ratio[k])
        dom = LatticeDomain.box(eps, lo, hi, pad=eps if pad is None else pad)
        Ee = recovery_sequence(E, dom, n)
        F_per = discrete_perimeter(Ee, models.neighbors)
        cm = regime.curvature_model(k, models.curvature_mode)
        F_curv = curvature_energy(cm, Ee) if len(Ee) else 0.0
        scale = cm.eam_value * skel
        if C0 is None:
            C0 = F_curv / scale if scale > 0 else 0.0
        el, el_lim = _elastic_columns(models, dom, Ee, E, float(regime.delta[k]), (lo, hi))
        rows.append(dict(eps=eps, delta=float(regime.delta[k]), eta=float(regime.eta[k]),
                         gamma=float(regime.gamma[k]), F_per=F_per, Per_phi=per_phi,
                         gap=abs(F_per - per_phi), F_curv=F_curv, curv_bound=C0 * scale,
                         elastic=el, elastic_limit=el_lim))
    return rows


TABLE_COLUMNS = ("eps", "delta", "eta", "gamma", "F_per", "Per_phi", "gap", "F_curv", "curv_bound",
                 "elastic", "elastic_limit")


def curvature_skeleton_bound(E: VoxelSet, Ee: VoidSet, model: CurvatureModel):
    """(F_curv, quantum * eps^d * #{sites within sqrt(d) eta of the skeleton})."""
    dom = Ee.domain
    seg_lo, seg_hi, _ = edge_skeleton(E)
    # recovered cubes sit at most half a block plus half a site away from E
    shift = 0.5 * (model.eta + dom.epsilon) * math.sqrt(dom.d)
    count = sites_near_skeleton(dom, seg_lo, seg_hi, math.sqrt(dom.d) * model.eta + shift)
    F = curvature_energy(model, Ee) if len(Ee) else 0.0
    return F, model.quantum * dom.epsilon ** dom.d * count


# ---------------------------------------------------------------- Cauchy-Born harness


@dataclass
class CauchyBornRow:
    eps: float
    delta: float
    deviation: float
    cells: int
    energy: float
    converged: bool


def cauchy_born_experiment(F, eps_list, omega, cells: CellEnergyModel, void_box=None, delta_fn=None,
                           params: SolverParams | None = None, margin=1):
    """Minimise with u = F x on the boundary and compare the cell-averaged strain with sym(F) Z.

    Cells within ``margin`` sites of the void box or of the boundary of Omega are
    left out of the average. Returns one row per eps.
    """
    F = np.asarray(F, dtype=float)
    d = F.shape[0]
    target = 0.5 * (F + F.T) @ reference_cell(d)
    lo, hi = np.asarray(omega[0], dtype=float), np.asarray(omega[1], dtype=float)
    delta_fn = delta_fn or math.sqrt
    rows = []
    for eps in eps_list:
        dom = LatticeDomain.box(eps, lo, hi, pad=eps)
        if void_box is not None:
            vlo, vhi = index_bounds(eps, void_box)
            idx = np.array(list(itertools.product(*[range(int(a), int(b)) for a, b in zip(vlo, vhi)])),
                           dtype=np.int64).reshape(-1, d)
            E = VoidSet(dom, idx)
        else:
            E = VoidSet(dom)
        delta = float(delta_fn(eps))
        res = minimize_elastic(cells, dom, E, lambda x: x @ F.T, delta, params, region=dirichlet_region(dom))
        e = symmetric_discrete_gradient_field(res.u, E, delta)
        keep = _interior_cells(dom, E, margin)
        dev = e[keep] - target
        mean_dev = float(np.sqrt((dev ** 2).sum(axis=(-2, -1))).mean()) if keep.any() else math.nan
        rows.append(CauchyBornRow(eps, delta, mean_dev, int(keep.sum()), res.energy, res.converged))
    return rows


def _interior_cells(dom: LatticeDomain, E: VoidSet, margin: int):
    """Cells labelled by sites of Omega whose vertices stay ``margin`` sites away from E and the boundary."""
    from scipy.ndimage import binary_dilation

    om = dom.omega_mask()
    keep = om.copy()
    olo = dom.omega_index_box[0] - dom.u_index_box[0]
    ohi = dom.omega_index_box[1] - dom.u_index_box[0]
    inner = np.zeros_like(om)
    inner[tuple(slice(int(a) + margin, int(b) - margin - 1) for a, b in zip(olo, ohi))] = True
    keep &= inner
    if len(E):
        grown = binary_dilation(E.mask(), iterations=margin + 1, structure=np.ones((3,) * dom.d, bool))
        # a cell at i touches i + {0,1}^d, so also exclude cells just below the grown void
        for b in itertools.product((0, 1), repeat=dom.d):
            keep &= ~np.roll(grown, tuple(-v for v in b), axis=tuple(range(dom.d)))
    return keep
