"""Flatness classes of lattice sets and the discrete curvature energies.

Everything is computed on dense boolean frames: the void indicator and the U
indicator on a box of sites, padded so that every window of interest fits.
Window predicates for all sites at once reduce to box sums and box extrema.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .elastic import vertex_offsets
from .lattice import LatticeDomain, VoidSet, index_bounds


# ---------------------------------------------------------------- frames


@dataclass
class Frame:
    """Void and U indicators on the index box [lo, lo + shape)."""

    void: np.ndarray
    in_u: np.ndarray
    lo: np.ndarray

    @property
    def d(self):
        return self.void.ndim

    def local(self, i):
        return tuple(int(v) for v in np.asarray(i) - self.lo)


def make_frame(E: VoidSet, margin: int, infinite_u=False) -> Frame:
    dom = E.domain
    void = np.pad(E.mask(), margin)
    if infinite_u:
        in_u = np.ones_like(void)
    else:
        in_u = np.pad(np.ones(dom.u_shape, dtype=bool), margin)
    return Frame(void, in_u, dom.u_index_box[0] - margin)


def window_offsets(n: int):
    """Offsets j with i + j the sites of Q_eta(i), eta = n * eps."""
    return -(n // 2), n - n // 2 - 1


def _shift(a, v, fill):
    out = np.full(a.shape, fill, dtype=a.dtype)
    src, dst = [], []
    for n, s in zip(a.shape, v):
        s = int(s)
        if abs(s) >= n:
            return out
        if s >= 0:
            src.append(slice(s, n))
            dst.append(slice(0, n - s))
        else:
            src.append(slice(0, n + s))
            dst.append(slice(-s, n))
    out[tuple(dst)] = a[tuple(src)]
    return out


def box_sum(a, lo, hi):
    """out[x] = sum of a[x + j] over lo <= j <= hi (per axis), zero outside."""
    out = np.asarray(a, dtype=np.int64)
    for ax in range(out.ndim):
        n = out.shape[ax]
        c = np.concatenate([np.zeros_like(np.take(out, [0], axis=ax)), np.cumsum(out, axis=ax)], axis=ax)
        x = np.arange(n)
        top = np.clip(x + hi[ax] + 1, 0, n)
        bot = np.clip(x + lo[ax], 0, n)
        out = np.take(c, top, axis=ax) - np.take(c, bot, axis=ax)
    return out


def box_reduce(a, lo, hi, op, fill):
    """out[x] = op of a[x + j] over lo <= j <= hi (per axis); ``fill`` outside."""
    filt = ndimage.maximum_filter1d if op == "max" else ndimage.minimum_filter1d
    w = max(max(abs(v) for v in lo), max(abs(v) for v in hi))
    out = np.pad(a, w, constant_values=fill)
    for ax in range(a.ndim):
        s = hi[ax] - lo[ax] + 1
        fwd = filt(out, s, axis=ax, mode="constant", cval=fill, origin=-(s // 2))
        v = [0] * a.ndim
        v[ax] = lo[ax]
        out = _shift(fwd, v, fill)
    return out[tuple(slice(w, w + n) for n in a.shape)]


# ---------------------------------------------------------------- catalogue


def flat_catalog(d: int) -> dict:
    """Admissible 2eps-cell patterns as bit masks over the vertices (binary order)."""
    offs = vertex_offsets(d)
    full = 2 ** (2 ** d) - 1
    cat = {"full": full, "empty": 0}
    for k in range(d):
        for s in (0, 1):
            bits = sum(1 << l for l, b in enumerate(offs) if b[k] == s)
            cat[f"half_{'lo' if s == 0 else 'hi'}_{k}"] = bits
    return cat


def cell_codes(frame: Frame):
    """Bit patterns of void and U membership for the cell with lower corner at each site."""
    d = frame.d
    code = np.zeros(frame.void.shape, dtype=np.int64)
    ucode = np.zeros(frame.void.shape, dtype=np.int64)
    for l, b in enumerate(vertex_offsets(d)):
        code |= _shift(frame.void, b, False).astype(np.int64) << l
        ucode |= _shift(frame.in_u, b, False).astype(np.int64) << l
    return code, ucode


def bad_cells(frame: Frame) -> np.ndarray:
    """Cells whose pattern matches no catalogue entry intersected with U."""
    code, ucode = cell_codes(frame)
    ok = np.zeros(code.shape, dtype=bool)
    for c in flat_catalog(frame.d).values():
        ok |= code == (c & ucode)
    return ~ok


def cell_window(n: int):
    """Range of k - i for 2eps-cells [k - 1/2, k + 3/2) eps meeting Q_eta(i)."""
    kmin = math.floor(-(n + 3) / 2) + 1
    kmax = math.ceil((n + 1) / 2) - 1
    return kmin, kmax


def locally_flat_field(frame: Frame, n: int) -> np.ndarray:
    bad = bad_cells(frame)
    kmin, kmax = cell_window(n)
    d = frame.d
    return box_sum(bad, [kmin] * d, [kmax] * d) == 0


def cubic_field(frame: Frame, n_window: int, n_grid: int) -> np.ndarray:
    """Sites whose eta-window admits an eta_eps-grid offset making E a union of blocks.

    E changes across a pair (x, x + e_a) only at block boundaries, so along each
    axis all changing pairs in the window must share one residue (x_a + 1) mod n.
    """
    d = frame.d
    jlo, jhi = window_offsets(n_window)
    ok = np.ones(frame.void.shape, dtype=bool)
    big = 1 << 30
    for a in range(d):
        e = [0] * d
        e[a] = 1
        nxt = _shift(frame.void, e, False)
        both_u = frame.in_u & _shift(frame.in_u, e, False)
        D = (frame.void != nxt) & both_u
        coord = np.arange(frame.void.shape[a]) + int(frame.lo[a]) + 1
        shape = [1] * d
        shape[a] = -1
        res = np.broadcast_to((coord % n_grid).reshape(shape), D.shape)
        lo = [jlo] * d
        hi = [jhi] * d
        hi[a] = jhi - 1
        rmax = box_reduce(np.where(D, res, -1), lo, hi, "max", -1)
        rmin = box_reduce(np.where(D, res, big), lo, hi, "min", big)
        ok &= (rmax < 0) | (rmax == rmin)
    return ok


def flat_field(frame: Frame, n_window: int, n_grid: int) -> np.ndarray:
    return cubic_field(frame, n_window, n_grid) & locally_flat_field(frame, n_window)


def _eta_ratio(eps, eta):
    n = eta / eps
    if abs(n - round(n)) > 1e-9 or round(n) < 1:
        raise ValueError("eta must be a positive integer multiple of eps")
    return int(round(n))


def _local_frame(E, i, n):
    margin = n + 4
    fr = make_frame(E, margin)
    return fr, fr.local(i)


def is_locally_flat(E: VoidSet, i, eta: float):
    """(flag, first violating cell lower corner or None)."""
    n = _eta_ratio(E.domain.epsilon, eta)
    fr, li = _local_frame(E, i, n)
    bad = bad_cells(fr)
    kmin, kmax = cell_window(n)
    sl = tuple(slice(c + kmin, c + kmax + 1) for c in li)
    hits = np.argwhere(bad[sl])
    if len(hits) == 0:
        return True, None
    k = hits[0] + np.array([c + kmin for c in li]) + fr.lo
    return False, tuple(int(v) for v in k)


def is_cubic(E: VoidSet, i, eta: float, eta_eps: float):
    """(flag, witness) with witness = (offset i0 in [0, n)^d, block centres meeting E)."""
    eps = E.domain.epsilon
    n = _eta_ratio(eps, eta)
    ng = _eta_ratio(eps, eta_eps)
    fr, li = _local_frame(E, i, max(n, ng))
    d = fr.d
    jlo, jhi = window_offsets(n)
    residues = []
    for a in range(d):
        e = [0] * d
        e[a] = 1
        D = (fr.void != _shift(fr.void, e, False)) & fr.in_u & _shift(fr.in_u, e, False)
        sl = [slice(c + jlo, c + jhi + 1) for c in li]
        sl[a] = slice(li[a] + jlo, li[a] + jhi)
        hits = np.argwhere(D[tuple(sl)])
        vals = {int((h[a] + li[a] + jlo + fr.lo[a] + 1) % ng) for h in hits}
        if len(vals) > 1:
            return False, None
        residues.append(vals.pop() if vals else 0)
    i0 = tuple((r + ng // 2) % ng for r in residues)
    win = tuple(slice(c + jlo, c + jhi + 1) for c in li)
    sites = np.argwhere(fr.void[win]) + np.array([c + jlo for c in li]) + fr.lo
    centres = block_index(sites - np.array(i0), ng) * ng + np.array(i0)
    centres = sorted({tuple(int(v) for v in c) for c in centres})
    return True, (i0, centres)


def is_cubic_bruteforce(E: VoidSet, i, eta: float, eta_eps: float) -> bool:
    """Exhaustive search over all (eta_eps / eps)^d grid offsets."""
    import itertools

    eps = E.domain.epsilon
    n = _eta_ratio(eps, eta)
    ng = _eta_ratio(eps, eta_eps)
    jlo, jhi = window_offsets(n)
    dom = E.domain
    d = dom.d
    axes = [np.arange(c + jlo, c + jhi + 1) for c in i]
    sites = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    sites = sites[dom.in_u(sites)]
    void = np.array([tuple(s) in E for s in sites.tolist()], dtype=bool)
    for off in itertools.product(range(ng), repeat=d):
        blocks = block_index(sites - np.array(off), ng)
        keys = [tuple(b) for b in blocks.tolist()]
        touched = {k for k, v in zip(keys, void) if v}
        filled = np.array([k in touched for k in keys], dtype=bool)
        if np.array_equal(filled, void):
            return True
    return False


def block_index(sites, n):
    """Index of the centred n-block containing each site."""
    return np.floor_divide(np.asarray(sites) + n // 2, n)


def is_flat(E: VoidSet, i, eta: float, eta_eps: float) -> bool:
    return is_cubic(E, i, eta, eta_eps)[0] and is_locally_flat(E, i, eta)[0]


def detect_laminate(E: VoidSet, region):
    """(axis, 0/1 layer profile) if E depends on one coordinate only inside region."""
    dom = E.domain
    lo, hi = index_bounds(dom.epsilon, region)
    shape = tuple(int(v) for v in hi - lo)
    if any(s <= 0 for s in shape):
        return None
    block = np.zeros(shape, dtype=bool)
    if len(E):
        rel = E.indices - lo
        keep = np.all((rel >= 0) & (rel < np.array(shape)), axis=1)
        block[tuple(rel[keep].T)] = True
    return laminate_of_block(block)


def laminate_of_block(block):
    for a in range(block.ndim):
        moved = np.moveaxis(block, a, 0).reshape(block.shape[a], -1)
        if np.all(moved == moved[:, :1]):
            return a, moved[:, 0].astype(np.int8)
    return None


# ---------------------------------------------------------------- energies


@dataclass(frozen=True)
class CurvatureModel:
    gamma: float
    eta: float
    q: float = 2.0
    mode: str = "generic"

    def __post_init__(self):
        if self.gamma <= 0 or self.eta <= 0:
            raise ValueError("gamma and eta must be positive")
        if self.q < 2:
            raise ValueError("q must be at least 2")
        if self.mode not in ("generic", "eam2d"):
            raise ValueError(f"unknown curvature mode {self.mode!r}")

    @property
    def quantum(self):
        """Cell energy of a non-flat site, gamma * eta^(-1-q)."""
        return self.gamma * self.eta ** (-1.0 - self.q)

    @property
    def eam_value(self):
        """Atom energy of a non-admissible neighbourhood, gamma * eta^(1-q)."""
        return self.gamma * self.eta ** (1.0 - self.q)


def nonflat_field(E: VoidSet, model: CurvatureModel):
    """(frame, bool array of non-flat sites) with eta used for window and grid."""
    n = _eta_ratio(E.domain.epsilon, model.eta)
    fr = make_frame(E, n + 4)
    return fr, ~flat_field(fr, n, n)


def curvature_cell_energy(model: CurvatureModel, i, E: VoidSet) -> float:
    if model.mode != "generic":
        raise ValueError("cell energy by flatness needs the generic mode")
    return 0.0 if is_flat(E, i, model.eta, model.eta) else model.quantum


def _region_select(fr: Frame, dom: LatticeDomain, region):
    lo, hi = index_bounds(dom.epsilon, dom.omega if region is None else region)
    sel = np.zeros(fr.void.shape, dtype=bool)
    a = np.maximum(lo - fr.lo, 0)
    b = np.minimum(hi - fr.lo, np.array(fr.void.shape))
    if np.all(b > a):
        sel[tuple(slice(int(x), int(y)) for x, y in zip(a, b))] = True
    return sel


def curvature_energy(model: CurvatureModel, E: VoidSet, region=None) -> float:
    """eps^d * quantum * number of non-flat sites in region (default Omega)."""
    fr, nonflat = nonflat_field(E, model)
    count = int(np.count_nonzero(nonflat & _region_select(fr, E.domain, region)))
    return count * E.domain.epsilon ** E.domain.d * model.quantum


def nonflat_count(E: VoidSet, model: CurvatureModel, region=None) -> int:
    fr, nonflat = nonflat_field(E, model)
    return int(np.count_nonzero(nonflat & _region_select(fr, E.domain, region)))


# ---------------------------------------------------------------- 2D counting model

EAM_ADMISSIBLE = ((3, 2), (4, 4))
EAM_RHO = (10.0, 1.0)


def _occupied_frame(E: VoidSet, margin):
    """Occupancy on a padded frame: every site not in E is an atom."""
    if E.domain.d != 2:
        raise ValueError("the counting model is two-dimensional")
    fr = make_frame(E, margin, infinite_u=True)
    return fr, ~fr.void


def _counts(occ):
    n1 = sum(_shift(occ, v, True).astype(np.int64) for v in ((1, 0), (-1, 0), (0, 1), (0, -1)))
    n2 = sum(_shift(occ, v, True).astype(np.int64) for v in ((1, 1), (1, -1), (-1, 1), (-1, -1)))
    return n1, n2


def eam_neighbor_counts(E: VoidSet, j):
    """(n1, n2): occupied sites at distance eps and sqrt(2) eps from atom j."""
    if E.domain.d != 2:
        raise ValueError("the counting model is two-dimensional")
    if tuple(j) in E:
        raise ValueError("site is void")
    j = np.asarray(j)
    n1 = sum(tuple(j + v) not in E for v in np.array([(1, 0), (-1, 0), (0, 1), (0, -1)]))
    n2 = sum(tuple(j + v) not in E for v in np.array([(1, 1), (1, -1), (-1, 1), (-1, -1)]))
    return int(n1), int(n2)


def eam_density(n1, n2):
    """Electron density rho(1) n1 + rho(sqrt 2) n2; injective on counts in [0, 4]^2."""
    return EAM_RHO[0] * np.asarray(n1) + EAM_RHO[1] * np.asarray(n2)


def _admissible_density(rho):
    ok = np.zeros(np.shape(rho), dtype=bool)
    for n1, n2 in EAM_ADMISSIBLE:
        ok |= np.asarray(rho) == eam_density(n1, n2)
    return ok


def _window_box(window):
    lo, hi = window
    return np.asarray(lo, dtype=np.int64), np.asarray(hi, dtype=np.int64)


def check_eam_window(E: VoidSet, window):
    """Raise unless every void lies strictly inside the window (off its outer ring)."""
    lo, hi = _window_box(window)
    if len(E) == 0:
        return
    if np.any(E.indices < lo + 1) or np.any(E.indices > hi - 2):
        raise ValueError("window truncates support")


def _nonadmissible_atoms(E: VoidSet, margin):
    fr, occ = _occupied_frame(E, margin)
    n1, n2 = _counts(occ)
    bad = occ & ~_admissible_density(eam_density(n1, n2))
    return fr, bad


def eam_phi(E: VoidSet, window, model: CurvatureModel) -> float:
    """sum over atoms of G(n1, n2): 0 on the admissible counts, gamma eta^(1-q) otherwise."""
    check_eam_window(E, window)
    lo, hi = _window_box(window)
    fr, bad = _nonadmissible_atoms(E, 4)
    sites = np.argwhere(bad) + fr.lo
    inside = np.all((sites >= lo) & (sites < hi), axis=1)
    # atoms outside the frame have (4, 4) since the frame covers U plus a margin
    return int(np.count_nonzero(inside)) * model.eam_value


def eam_curvature_energy(E: VoidSet, model: CurvatureModel, window) -> float:
    """sum_i eps^2 W(i), W(i) = eta^-2 * sum of G over atoms in Q_eta(i) \\ E.

    Computed through per-site window counts, independently of :func:`eam_phi`.
    """
    check_eam_window(E, window)
    eps = E.domain.epsilon
    n = _eta_ratio(eps, model.eta)
    fr, bad = _nonadmissible_atoms(E, n + 4)
    jlo, jhi = window_offsets(n)
    per_site = box_sum(bad, [jlo, jlo], [jhi, jhi])
    vals = per_site[per_site > 0]
    w = eps ** 2 * model.eta ** -2 * model.eam_value
    return math.fsum((vals * w).tolist())


def eam_lemma_check(E: VoidSet, eta_ratio: int = 8, shrink: int = 4):
    """Sites i where E is not locally flat in Q_{eta - 4 eps}(i) but every atom of
    Q_eta(i) has admissible counts. Returns the list of such counterexamples."""
    n = eta_ratio
    fr, bad_atoms = _nonadmissible_atoms(E, n + 4)
    inner = n - shrink
    not_flat = ~locally_flat_field(Frame(fr.void, np.ones_like(fr.void), fr.lo), inner)
    jlo, jhi = window_offsets(n)
    witnessed = box_sum(bad_atoms, [jlo, jlo], [jhi, jhi]) > 0
    cex = np.argwhere(not_flat & ~witnessed) + fr.lo
    return [tuple(int(v) for v in c) for c in cex]
