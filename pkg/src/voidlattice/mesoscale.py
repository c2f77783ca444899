"""Set surgeries on the mesoscale: block replacement, smoothing, cube regularisation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .curvature import block_index, detect_laminate, window_offsets
from .elastic import cube_simplices
from .lattice import LatticeDomain, VoidSet, VoxelSet, hausdorff_distance
from .surface import NeighborModel, broken_bond_field, perimeter_from_counts, region_slices


# ---------------------------------------------------------------- block replacement


def _ratio(E, eta):
    n = eta / E.domain.epsilon
    if abs(n - round(n)) > 1e-9 or round(n) < 1:
        raise ValueError("eta must be a positive integer multiple of eps")
    return int(round(n))


def block_sites(domain: LatticeDomain, blocks, n):
    """All lattice sites of the centred n-blocks, restricted to Omega."""
    blocks = np.asarray(blocks, dtype=np.int64).reshape(-1, domain.d)
    if len(blocks) == 0:
        return np.zeros((0, domain.d), dtype=np.int64)
    jlo, jhi = window_offsets(n)
    import itertools
    offs = np.array(list(itertools.product(range(jlo, jhi + 1), repeat=domain.d)), dtype=np.int64)
    sites = (blocks[:, None, :] * n + offs[None]).reshape(-1, domain.d)
    return sites[domain.in_omega(sites)]


def eta_replacement(E: VoidSet, eta: float) -> VoidSet:
    """Fill every centred eta-cube that meets E, then intersect with Omega."""
    n = _ratio(E, eta)
    if len(E) == 0:
        return VoidSet(E.domain)
    blocks = np.unique(block_index(E.indices, n), axis=0)
    return VoidSet(E.domain, block_sites(E.domain, blocks, n))


def is_eta_aligned(E: VoidSet, eta: float) -> bool:
    return eta_replacement(E, eta) == E


def _cube_region(domain, centre_index, side):
    c = domain.epsilon * np.asarray(centre_index, dtype=float)
    return c - side / 2, c + side / 2


@dataclass
class ReplacementReport:
    good_cubes: int
    violations: list
    equalities: int
    subset_ok: bool


def replacement_perimeter_check(E: VoidSet, eta: float, model: NeighborModel) -> ReplacementReport:
    """Compare F_per(E_eta, Q) and F_per(E, Q) on cubes that are laminates in Q_{3 eta / 2}."""
    n = _ratio(E, eta)
    Eeta = eta_replacement(E, eta)
    subset_ok = bool(np.all([tuple(i) in Eeta for i in E])) if len(E) else True
    dom = E.domain
    olo, ohi = dom.omega_index_box
    blo = block_index(olo, n)
    bhi = block_index(ohi - 1, n)
    import itertools
    new_f = broken_bond_field(Eeta, model)
    old_f = broken_bond_field(E, model)
    nv = len(model.vectors)

    def per(f, region):
        counts = f[(slice(None),) + region_slices(dom, region)].reshape(nv, -1).sum(axis=1, dtype=np.int64)
        return perimeter_from_counts(model, counts, dom.epsilon, dom.d)

    good = 0
    eq = 0
    viol = []
    for b in itertools.product(*[range(int(a), int(c) + 1) for a, c in zip(blo, bhi)]):
        centre = np.asarray(b) * n
        if detect_laminate(E, _cube_region(dom, centre, 1.5 * eta)) is None:
            continue
        good += 1
        jlo, jhi = window_offsets(n)
        region = (dom.epsilon * (centre + jlo - 0.5), dom.epsilon * (centre + jhi + 0.5))
        new = per(new_f, region)
        old = per(old_f, region)
        if new > old * (1 + 1e-12) + 1e-15:
            viol.append((tuple(int(v) for v in b), new, old))
        elif math.isclose(new, old, rel_tol=1e-12, abs_tol=1e-15):
            eq += 1
    return ReplacementReport(good, viol, eq, subset_ok)


def replacement_cardinality(E: VoidSet, eta: float, region=None) -> int:
    Eeta = eta_replacement(E, eta)
    if region is not None:
        Eeta = Eeta.restricted(region)
        E = E.restricted(region)
    return len(Eeta) - len(E)


# ---------------------------------------------------------------- smoothing


def bump(r2):
    """Unnormalised bump exp(-1/(1 - |x|^2)) on the open unit ball."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def mollifier_kernel(sigma: float, h: float, d: int) -> np.ndarray:
    """Bump of radius sigma sampled at grid offsets, normalised to unit discrete mass."""
    m = int(math.ceil(sigma / h))
    ax = np.arange(-m, m + 1) * h
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    r2 = sum(g * g for g in grids) / sigma ** 2
    k = bump(r2)
    return k / k.sum()


@dataclass
class SmoothSetSample:
    field: np.ndarray
    h: float
    origin: np.ndarray
    sigma: float
    t: float
    cover: VoxelSet
    source: VoxelSet
    report: dict = field(default_factory=dict)

    def cell_centres(self):
        idx = np.indices(self.field.shape).reshape(self.field.ndim, -1).T
        return self.origin + self.h * idx


def _grid_h(sigma, h):
    """Largest spacing <= h with 1/h an integer, so unit cubes are unions of cells."""
    k = max(1, int(math.ceil(1.0 / h - 1e-12)))
    return 1.0 / k


def _fine_indicator(E1: VoxelSet, sigma, h):
    """Indicator of Q(E1) on cells of size h covering Q(E1) grown by sigma and a margin."""
    k = int(round(1.0 / h))
    lo = E1.cells.min(axis=0)
    hi = E1.cells.max(axis=0)
    pad = int(math.ceil(sigma / h)) + 2
    shape = tuple(int(v) for v in (hi - lo + 1) * k + 2 * pad)
    chi = np.zeros(shape, dtype=float)
    for c in E1.cells - lo:
        chi[tuple(slice(int(v) * k + pad, int(v) * k + pad + k) for v in c)] = 1.0
    # centre of fine cell 0: lower corner of Q(E1) box minus pad cells, plus h/2
    origin = np.asarray(E1.origin) + (lo - 0.5) * 1.0 - pad * h + 0.5 * h
    return chi, origin


def _cover_from_field(f, t, h, origin):
    idx = np.argwhere(f > t)
    return VoxelSet(h, idx, tuple(origin))


def smooth_cubic_set(E1: VoxelSet, sigma=0.3, t=0.1, h=None, check=True) -> SmoothSetSample:
    """Sample f = chi_{Q(E1)} * zeta_sigma on a fine grid and take the cover {f > t}.

    E1 is a set of unit cubes. The convolution is a midpoint quadrature on the
    fine grid, done by FFT; the cover is checked to contain Q(E1), stay within
    sigma + 2h of it, and keep a positive clearance from it.
    """
    if not 0 < t < 1:
        raise ValueError("level t must lie in (0, 1)")
    if not 0 < sigma < 0.5:
        raise ValueError("sigma must lie in (0, 1/2)")
    h = _grid_h(sigma, sigma / 16 if h is None else h)
    d = E1.d
    if len(E1) == 0:
        empty = VoxelSet.empty(h, d)
        return SmoothSetSample(np.zeros((0,) * d), h, np.zeros(d), sigma, t, empty, E1,
                               dict(inclusion=True, hausdorff=0.0, clearance=math.inf))
    if not math.isclose(E1.cell_size, 1.0):
        raise ValueError("smooth_cubic_set expects unit cubes")
    chi, origin = _fine_indicator(E1, sigma, h)
    kern = mollifier_kernel(sigma, h, d)
    f = np.clip(fftconvolve(chi, kern, mode="same"), 0.0, 1.0)
    f[f < 1e-13] = 0.0
    cover = _cover_from_field(f, t, h, origin)
    sample = SmoothSetSample(f, h, origin, sigma, t, cover, E1)
    if check:
        sample.report = smoothing_properties(sample)
        if not sample.report["inclusion"]:
            raise ValueError("level too high")
    return sample


def smoothing_properties(sample: SmoothSetSample) -> dict:
    """Inclusion of Q(E1), Hausdorff distance to Q(E1), and clearance of the complement."""
    f, h = sample.field, sample.h
    chi, _ = _fine_indicator(sample.source, sample.sigma, h)
    inside = chi > 0.5
    covered = f > sample.t
    inclusion = bool(np.all(covered[inside]))
    haus = hausdorff_distance(sample.cover, sample.source)
    return dict(inclusion=inclusion, hausdorff=haus, clearance=_clearance(sample, inside, covered),
                bound=sample.sigma + 2 * h)


def _clearance(sample, inside, covered):
    """Exact box distance from the uncovered fine cells to Q(E1)."""
    from scipy.ndimage import distance_transform_edt

    h = sample.h
    out = ~covered
    if not np.any(out):
        return math.inf
    dist = distance_transform_edt(~inside) * h
    near = out & (dist <= dist[out].min() + 2 * h * math.sqrt(inside.ndim))
    cells = np.argwhere(near)
    lo = sample.origin + h * (cells - 0.5)
    hi = lo + h
    qlo, qhi = sample.source.boxes()
    gap = np.maximum(np.maximum(qlo[None] - hi[:, None], lo[:, None] - qhi[None]), 0.0)
    return float(np.sqrt((gap ** 2).sum(axis=2)).min())




def choose_level(E1: VoxelSet, sigma=0.3, h=None, levels=(0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45)):
    """Pick t among levels that pass inclusion, maximising min |grad f| on the level band."""
    base = smooth_cubic_set(E1, sigma, levels[0], h, check=False)
    f = base.field
    g = np.gradient(f, base.h)
    gn = np.sqrt(sum(x * x for x in g))
    chi, _ = _fine_indicator(E1, sigma, base.h)
    inside = chi > 0.5
    best, best_t = -1.0, None
    for t in levels:
        if not np.all(f[inside] > t):
            continue
        band = np.abs(f - t) <= 0.5 * base.h * gn + 1e-15
        band &= gn > 0
        score = float(gn[band].min()) if np.any(band) else 0.0
        if score > best + 1e-12:
            best, best_t = score, t
    if best_t is None:
        raise ValueError("no level passes the inclusion check")
    return best_t


def smooth_at_eta_scale(E: VoidSet, eta: float, sigma=0.3, t=0.1, h=None) -> SmoothSetSample:
    """Rescale an eta-aligned void set to unit cubes, smooth, and scale back by eta.

    Lattice sites of a centred block of even side n voxelise to the block cube
    shifted by -eps/2, so the result is shifted the same way.
    """
    n = _ratio(E, eta)
    if not is_eta_aligned(E, eta):
        raise ValueError("apply eta_replacement first")
    d = E.domain.d
    if len(E) == 0:
        return smooth_cubic_set(VoxelSet.empty(1.0, d), sigma, t, h)
    blocks = np.unique(block_index(E.indices, n), axis=0)
    unit = smooth_cubic_set(VoxelSet(1.0, blocks), sigma, t, h)
    shift = -0.5 * E.domain.epsilon if n % 2 == 0 else 0.0
    origin = unit.origin * eta + shift
    cover = VoxelSet(unit.h * eta, unit.cover.cells, tuple(np.asarray(unit.cover.origin) * eta + shift))
    source = VoxelSet(eta, blocks, tuple(np.full(d, shift)))
    rep = dict(unit.report)
    rep["hausdorff"] = rep["hausdorff"] * eta
    rep["clearance"] = rep["clearance"] * eta
    rep["bound"] = rep["bound"] * eta
    return SmoothSetSample(unit.field, unit.h * eta, origin, sigma, t, cover, source, rep)


# ---------------------------------------------------------------- cube regularisation


def simplex_count(d: int) -> int:
    return len(cube_simplices(d))


def default_thresholds(d: int, iso_constant: float = 4.0):
    """(theta, beta) with beta = 1/(2 n_d), theta = (beta / (2 C_d))^((d-1)/d)."""
    beta = 1.0 / (2 * simplex_count(d))
    theta = (beta / (2 * iso_constant)) ** ((d - 1) / d)
    return theta, beta


@dataclass
class CubeClassification:
    labels: dict
    theta: float
    beta: float
    area: dict
    volume: dict


def _tally(keys, weight):
    if len(keys) == 0:
        return {}
    u, cnt = np.unique(keys, axis=0, return_counts=True)
    return {tuple(int(v) for v in k): c * weight for k, c in zip(u, cnt)}


def _cube_stats(W: VoxelSet, eps: float):
    """Per eps-cube (centred on eps Z^d) void volume and boundary area of W.

    A face between fine cells c and c + e_a is charged to the eps-cube holding
    c + e_a.
    """
    h = W.cell_size
    k = eps / h
    if abs(k - round(k)) > 1e-9:
        raise ValueError("eps must be an integer multiple of the fine cell size")
    k = int(round(k))
    d = W.d
    corner = np.asarray(W.origin) - 0.5 * h + 0.5 * eps
    if not np.allclose(corner / h, np.round(corner / h), atol=1e-7):
        raise ValueError("fine grid not aligned with the eps-cubes")
    if len(W) == 0:
        return {}, {}, k
    m, lo = W.occupancy()
    p = np.pad(m, 1)
    plo = lo - 1

    def cube_of(idx):
        x = np.asarray(W.origin) + h * (idx + plo)
        return np.floor(x / eps + 0.5 + 1e-9).astype(np.int64)

    vol = _tally(cube_of(np.argwhere(p)), h ** d)
    ups = []
    for a in range(d):
        diff = p[tuple(slice(1, None) if b == a else slice(None) for b in range(d))] != \
            p[tuple(slice(None, -1) if b == a else slice(None) for b in range(d))]
        up = np.argwhere(diff)
        up[:, a] += 1
        ups.append(up)
    area = _tally(cube_of(np.concatenate(ups)), h ** (d - 1))
    return vol, area, k


def classify_cubes(W: VoxelSet, eps: float, theta=None, beta=None, iso_constant=4.0) -> CubeClassification:
    d = W.d
    t0, b0 = default_thresholds(d, iso_constant)
    theta = t0 if theta is None else theta
    beta = b0 if beta is None else beta
    vol, area, _ = _cube_stats(W, eps)
    labels = {}
    for c in sorted(set(vol) | set(area)):
        if area.get(c, 0.0) >= theta * eps ** (d - 1):
            labels[c] = "good"
        elif vol.get(c, 0.0) <= beta * eps ** d:
            labels[c] = "bad1"
        else:
            labels[c] = "bad2"
    return CubeClassification(labels, theta, beta, area, vol)


def cubic_void_regularization(W: VoxelSet, eps: float, theta=None, beta=None, iso_constant=4.0):
    """V = W plus every good and bad2 eps-cube, on W's fine grid; returns (V, classification)."""
    cls = classify_cubes(W, eps, theta, beta, iso_constant)
    if len(W) == 0:
        return W, cls
    k = int(round(eps / W.cell_size))
    import itertools
    d = W.d
    add = [c for c, lab in cls.labels.items() if lab in ("good", "bad2")]
    cells = [W.cells]
    if add:
        # fine cells of eps-cube c: centres eps*c + h*(j + 1/2) - eps/2
        h = W.cell_size
        offs = np.array(list(itertools.product(range(k), repeat=d)))
        centres = (np.asarray(add, dtype=float)[:, None, :] * eps - 0.5 * eps + h * (offs[None] + 0.5)).reshape(-1, d)
        cells.append(np.rint((centres - np.asarray(W.origin)) / h).astype(np.int64))
    V = VoxelSet(W.cell_size, np.concatenate(cells), W.origin)
    return V, cls


def bad1_simplex_check(cls: CubeClassification, eps: float, d: int) -> bool:
    """Every bad1 cube holds at most half the volume of one simplex of its triangulation."""
    half_simplex = 0.5 * eps ** d / simplex_count(d)
    return all(cls.volume.get(c, 0.0) <= half_simplex * (1 + 1e-12)
               for c, lab in cls.labels.items() if lab == "bad1")


def boundary_face_ratio(P: np.ndarray) -> float:
    """H(dP on the cube boundary) / H(dP inside the cube) for a voxel subset P of a cube."""
    m = np.asarray(P, dtype=bool)
    outer = 0
    inner = 0
    for a in range(m.ndim):
        outer += int(np.count_nonzero(np.take(m, 0, axis=a))) + int(np.count_nonzero(np.take(m, -1, axis=a)))
        inner += int(np.count_nonzero(np.diff(m.astype(np.int8), axis=a)))
    if inner == 0:
        return math.inf if outer else 0.0
    return outer / inner
