"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line and then asserts. Run with ``pytest -v tests/test_acceptance.py``.
"""
import itertools
import math
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from voidlattice.curvature import (CurvatureModel, detect_laminate, eam_curvature_energy, eam_lemma_check,
                                   eam_phi, is_cubic, is_flat, is_locally_flat)
from voidlattice.elastic import (CellEnergyModel, SolverParams, affine_map, dirichlet_region, minimize_elastic,
                                 project_rigid_complement, projector, q_bulk, reference_cell, rigid_basis)
from voidlattice.gamma import ExperimentModels, desk_regime, gamma_limsup_experiment, suggest_regime
from voidlattice.lattice import LatticeDomain, VoidSet, VoxelSet
from voidlattice.mesoscale import (eta_replacement, replacement_cardinality, replacement_perimeter_check,
                                   smooth_cubic_set)
from voidlattice.sampling import make_rng, random_laminate, random_void_set, random_void_set_2d
from voidlattice.surface import NeighborModel


@pytest.fixture
def report(capsys):
    start = time.perf_counter()

    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail} ({time.perf_counter() - start:.1f}s)")
        assert ok, detail

    return emit


# ---------------------------------------------------------------- 1, 2: counting model in 2D


def test_criterion_01_eam_identity(report):
    rng = make_rng(2024)
    model = CurvatureModel(1.0, 8.0, 2.0, "eam2d")
    window = ((0, 0), (32, 32))
    worst = 0.0
    for _ in range(100):
        E = random_void_set_2d(rng, (32, 32))
        p = eam_phi(E, window, model)
        c = eam_curvature_energy(E, model, window)
        worst = max(worst, abs(c - p) / max(abs(p), 1e-300))
    report(1, worst <= 1e-12, f"100 sets, worst relative error {worst:.2e}")


def test_criterion_02_eam_lemma(report):
    rng = make_rng(7)
    cex = 0
    for _ in range(10_000):
        cex += len(eam_lemma_check(random_void_set_2d(rng, (32, 32)), 8, 4))
    report(2, cex == 0, f"10000 sets, {cex} counterexamples")


# ---------------------------------------------------------------- 3: projection


def test_criterion_03_projection(report):
    rng = np.random.default_rng(3)
    Z = reference_cell(3)
    worst = 0.0
    for _ in range(1000):
        F = rng.normal(size=(3, 3))
        worst = max(worst, np.linalg.norm(project_rigid_complement(F @ Z) - 0.5 * (F + F.T) @ Z))
    skew = 0.0
    for _ in range(100):
        B = rng.normal(size=(3, 3))
        skew = max(skew, np.linalg.norm(project_rigid_complement((B - B.T) @ Z)))
    trans = 0.0
    for _ in range(100):
        v = rng.normal(size=3)
        trans = max(trans, np.linalg.norm(project_rigid_complement(np.repeat(v[:, None], 8, axis=1))))
    ok = max(worst, skew, trans) <= 1e-12
    report(3, ok, f"sym {worst:.1e}, skew {skew:.1e}, translation {trans:.1e}")


# ---------------------------------------------------------------- 4: laminate library

N4 = 40
C4 = N4 // 2


def _dom4():
    return LatticeDomain.box(1.0, (0, 0, 0), (N4, N4, N4), pad=1.0)


def _region4(eta):
    return np.full(3, C4 - 0.75 * eta), np.full(3, C4 + 0.75 * eta)


def _non_laminates():
    """(name, mask, predicted failing check) for 50 sets around the centre site."""
    X = np.indices((N4,) * 3)
    c = C4
    out = []
    for a, b in itertools.combinations(range(3), 2):
        for sa, sb in itertools.product((1, -1), repeat=2):
            m = (sa * (X[a] - c) < 0) & (sb * (X[b] - c) < 0)
            out.append((f"edge {a}{b} {sa:+d}{sb:+d}", m, "locally_flat"))
    for s in itertools.product((1, -1), repeat=3):
        m = np.all([s[k] * (X[k] - c) < 0 for k in range(3)], axis=0)
        out.append((f"corner {s}", m, "locally_flat"))
    for k, shape in enumerate([(1, 1, 1), (2, 1, 1), (1, 2, 1), (1, 1, 2), (2, 2, 1), (2, 2, 2), (3, 1, 1),
                               (1, 3, 3), (3, 3, 3), (2, 1, 3), (3, 2, 1), (1, 2, 3)]):
        m = np.zeros((N4,) * 3, bool)
        m[tuple(slice(c, c + w) for w in shape)] = True
        out.append((f"atom cluster {shape}", m, "flat"))
    for a, b in itertools.permutations(range(3), 2):
        m = (X[a] < c) | ((np.abs(X[b] - c) <= 1) & (X[a] >= c))
        out.append((f"T-junction {a}{b}", m, "locally_flat"))
    for (a, b), h in itertools.product(itertools.permutations(range(3), 2), (1, 3)):
        m = (X[a] < c) | ((X[b] < c) & (X[a] < c + h))
        out.append((f"step {a}{b} h{h}", m, "locally_flat"))
    return out


def test_criterion_04_laminates(report):
    dom = _dom4()
    X = np.indices((N4,) * 3)
    centre = (C4,) * 3
    flat_fail = []
    for eta in (8, 12, 16):
        region = _region4(eta)
        for a in range(3):
            for s in (1, -1):
                for j in range(20):
                    k = C4 + j - 10
                    m = X[a] < k if s > 0 else X[a] >= k
                    E = VoidSet(dom, np.argwhere(m))
                    lam = detect_laminate(E, region)
                    if lam is None or not is_flat(E, centre, float(eta), float(eta)):
                        flat_fail.append((eta, a, s, k))
    lib = _non_laminates()
    wrong = []
    eta = 8.0
    for name, m, predicted in lib:
        E = VoidSet(dom, np.argwhere(m))
        lf = is_locally_flat(E, centre, eta)[0]
        fl = lf and is_cubic(E, centre, eta, eta)[0]
        failed = (not lf) if predicted == "locally_flat" else (not fl)
        if not failed or detect_laminate(E, _region4(eta)) is not None:
            wrong.append(name)
    ok = not flat_fail and not wrong and len(lib) == 50
    report(4, ok, f"360 half-spaces, {len(flat_fail)} rejected; {len(lib)} non-laminates, "
                  f"{len(wrong)} not caught {wrong[:3]}")


# ---------------------------------------------------------------- 5, 6: recovery sequences

OMEGA = ((0, 0, 0), (1, 1, 1))
EPS5 = [2.0 ** -k for k in range(3, 8)]
ETA5 = [1 / 4, 1 / 4, 1 / 8, 1 / 8, 1 / 16]


def _quarter_cubes(cells):
    return VoxelSet(0.25, np.array(cells), (0.375,) * 3)


def _l_shapes():
    def L(drop, depth, perm):
        cells = [c for c in itertools.product(range(2), range(2), range(depth)) if tuple(c[:2]) != drop]
        return _quarter_cubes(np.array(cells)[:, perm])

    return [L((1, 1), 1, [0, 1, 2]), L((0, 1), 2, [0, 1, 2]), L((1, 0), 1, [0, 2, 1]),
            L((0, 0), 2, [2, 0, 1]), L((1, 1), 2, [1, 2, 0])]


def test_criterion_05_recovery_perimeter(report):
    reg = desk_regime(EPS5, ETA5)
    boxes = [_quarter_cubes(list(itertools.product(range(2), repeat=3))),
             _quarter_cubes([(0, 0, 0)]),
             _quarter_cubes(list(itertools.product(range(2), range(1), range(2))))]
    exact = ExperimentModels(NeighborModel.nearest(3))
    gaps = [[r["gap"] for r in gamma_limsup_experiment(B, reg, exact, OMEGA)] for B in boxes]
    exact_ok = all(g == 0.0 for row in gaps for g in row)
    generic = ExperimentModels(NeighborModel.nearest_and_diagonal(3))
    details = []
    generic_ok = True
    for E in _l_shapes():
        rows = gamma_limsup_experiment(E, reg, generic, OMEGA)
        g = [r["gap"] for r in rows]
        bound = 2 * ETA5[-1] * rows[-1]["Per_phi"]
        generic_ok &= all(b <= a for a, b in zip(g, g[1:])) and g[-1] <= bound
        details.append(f"{g[0]:.3g}->{g[-1]:.3g} (bound {bound:.3g})")
    report(5, exact_ok and generic_ok,
           f"boxes exact {exact_ok}; L-shapes " + ", ".join(details))


def _curvature_rows(E, omega, eps, eta):
    reg = desk_regime(eps, eta)
    rows = gamma_limsup_experiment(E, reg, ExperimentModels(NeighborModel.nearest_and_diagonal(3)), omega)
    F = np.array([r["F_curv"] for r in rows])
    ratio = F / (reg.gamma * reg.eta ** (1 - reg.q))
    return F, ratio


def test_criterion_06_recovery_curvature(report):
    eps = [2.0 ** -k for k in range(4, 9)]
    eta = [1 / 8, 1 / 8, 1 / 16, 1 / 16, 1 / 32]
    box = VoxelSet(0.5, np.array([(0, 0, 0)]), (0.5,) * 3)
    cells = [c for c in itertools.product(range(4), range(4), range(2)) if not (c[0] >= 2 and c[1] >= 2)]
    ell = VoxelSet(0.25, np.array(cells), (0.375,) * 3)
    cases = [("box", box, ((1 / 8,) * 3, (7 / 8,) * 3)),
             ("L", ell, ((1 / 8,) * 3, (11 / 8, 11 / 8, 7 / 8)))]
    ok = True
    details = []
    for name, E, omega in cases:
        F, ratio = _curvature_rows(E, omega, eps, eta)
        C0 = ratio[0]
        dec = bool(np.all(np.diff(F) < 0))
        within = bool(np.all((ratio >= 0) & (ratio <= C0)))
        drop = F[-1] <= 0.1 * F[0]
        ok &= dec and within and drop
        details.append(f"{name} F {F[0]:.3g}->{F[-1]:.3g}, max ratio/C0 {np.max(ratio / C0):.3g}")
    report(6, ok, "; ".join(details))


# ---------------------------------------------------------------- 7, 8: cell energy


def _pair_oracle(model, G):
    """Spring energy by enumerating vertex pairs of the unit cube directly."""
    verts = list(itertools.product((0, 1), repeat=3))
    col = {v: sum(b << k for k, b in enumerate(v)) for v in verts}
    total = 0.0
    for p, q in itertools.combinations(verts, 2):
        n = sum(abs(a - b) for a, b in zip(p, q))
        if n == 1:
            K, w, L = model.K1, 1 / 8, 1.0
        elif n == 2:
            K, w, L = model.K2, 1 / 4, math.sqrt(2)
        else:
            continue
        total += 0.5 * K * w * (np.linalg.norm(G[:, col[p]] - G[:, col[q]]) - L) ** 2
    return total


def test_criterion_07_spring_cell(report):
    m = CellEnergyModel(K1=1.3, K2=0.7)
    Z = reference_cell(3)
    rest = float(m.bulk(Z))
    R = Rotation.random(100, random_state=7).as_matrix()
    rot = float(np.max(m.bulk(R @ Z)))
    stretch_ok = True
    errs = []
    for t in (1e-2, 1e-3):
        G = (1 + t) * Z
        val = float(m.bulk(G))
        oracle = _pair_oracle(m, G)
        closed = 0.75 * m.K1 * t ** 2 + 3 * m.K2 * t ** 2
        stretch_ok &= abs(val - closed) <= 10 * t ** 3 and math.isclose(val, oracle, rel_tol=1e-9)
        errs.append(abs(val - closed) / t ** 3)
    ok = rest == 0.0 and rot <= 1e-12 and stretch_ok
    report(7, ok, f"rest {rest}, rotations {rot:.1e}, |err|/t^3 {errs[0]:.2f}, {errs[1]:.2f}")


def test_criterion_08_q_bulk(report):
    Q = q_bulk(CellEnergyModel(1.0, 1.0), 3)
    Z = reference_cell(3)
    rigid = max(abs(Q(v.reshape(Z.shape))) for v in rigid_basis(3))
    P = projector(3)
    rng = np.random.default_rng(8)
    low = math.inf
    for _ in range(50):
        v = P @ rng.normal(size=Z.size)
        v /= np.linalg.norm(v)
        low = min(low, Q(v.reshape(Z.shape)))
    report(8, rigid <= 1e-8 and low > 1e-6, f"rigid max {rigid:.1e}, complement min {low:.3g}")


# ---------------------------------------------------------------- 9: minimisation


def test_criterion_09_minimization(report):
    m = CellEnergyModel(1.0, 1.0)
    dom = LatticeDomain.box(1 / 16, (0, 0, 0), (1, 1, 1), pad=1 / 16)
    region = dirichlet_region(dom)
    vol = float(np.prod(np.asarray(region[1]) - np.asarray(region[0])))
    t = 0.1
    params = SolverParams(tol=1e-9, max_iter=3000)
    F = np.diag([t, 0.0, 0.0])
    sym = minimize_elastic(m, dom, None, affine_map(F), 1e-3, params, region=region)
    density = sym.energy / vol
    Z = reference_cell(3)
    target = 0.5 * q_bulk(m, 3)(F @ Z)
    A = np.array([[0, t, 0], [-t, 0, 0], [0, 0, 0]])
    skew = minimize_elastic(m, dom, None, affine_map(A), 1e-3, params, region=region)
    rel = abs(density - target) / target
    ratio = skew.energy / sym.energy
    report(9, rel <= 0.05 and ratio <= 1e-6,
           f"density {density:.6g} vs {target:.6g} ({100 * rel:.2f}%), skew/sym {ratio:.1e}")


# ---------------------------------------------------------------- 10: replacement


def test_criterion_10_replacement(report):
    rng = make_rng(10)
    dom = LatticeDomain.box(1 / 12, (0, 0, 0), (1, 1, 1), pad=1 / 12)
    models = [NeighborModel.nearest(3), NeighborModel.nearest_and_diagonal(3)]
    viol = 0
    subset = True
    good = 0
    for k in range(1000):
        E = random_laminate(rng, dom)
        n = int(rng.integers(2, 5))
        rep = replacement_perimeter_check(E, n / 12, models[k % 2])
        viol += len(rep.violations)
        subset &= rep.subset_ok
        good += rep.good_cubes
    dom2 = LatticeDomain.box(1 / 12, (0, 0, 0), (1, 1, 1), pad=1 / 12)
    mism = 0
    for _ in range(100):
        E = random_void_set(rng, dom2, p=0.05 * rng.random())
        n = int(rng.integers(1, 5))
        R = eta_replacement(E, n / 12)
        # brute force: sites whose centred block holds a void
        blocks = {tuple(np.floor((np.asarray(i) + n // 2) / n).astype(int)) for i in E}
        lo, hi = dom2.omega_index_box
        brute = {i for i in itertools.product(*[range(int(a), int(b)) for a, b in zip(lo, hi)])
                 if tuple(np.floor((np.asarray(i) + n // 2) / n).astype(int)) in blocks}
        mism += set(R) != brute or replacement_cardinality(E, n / 12) != len(brute - set(E))
    ok = viol == 0 and subset and mism == 0
    report(10, ok, f"1000 laminates, {good} good cubes, {viol} violations, subset {subset}; "
                   f"cardinality mismatches {mism}/100")


# ---------------------------------------------------------------- 11: smoothing


def test_criterion_11_smoothing(report):
    inputs = {
        "single": [(0, 0, 0)],
        "double": [(0, 0, 0), (1, 0, 0)],
        "double-edge": [(0, 0, 0), (1, 1, 0)],
        "L": [(0, 0, 0), (1, 0, 0), (0, 1, 0)],
    }
    levels = (0.05, 0.1, 0.2, 0.3, 0.4)
    ok = True
    details = []
    for name, cells in inputs.items():
        E1 = VoxelSet(1.0, np.array(cells))
        s = smooth_cubic_set(E1, 0.3, 0.1)
        r = s.report
        good = r["inclusion"] and r["hausdorff"] <= r["bound"] and r["clearance"] > 0
        covers = [s.field > t for t in levels]
        mono = all(np.all(a >= b) for a, b in zip(covers, covers[1:]))
        ok &= good and mono
        details.append(f"{name} H {r['hausdorff']:.3f}<={r['bound']:.3f} c0 {r['clearance']:.3f}")
    report(11, ok, "; ".join(details))


# ---------------------------------------------------------------- 12: regime


def test_criterion_12_regime(report):
    eps = [2.0 ** -k for k in range(6, 13)]
    fails = []
    for q in (2.0, 3.0):
        mon = suggest_regime(eps, q).monitors()
        for name, up in (("gamma*eta^-q", True), ("gamma*eta^(1-q)", False), ("gamma*delta^(-q/9)", True),
                         ("eta/eps", True), ("eta", False)):
            step = np.diff(mon[name])
            if not np.all(step > 0 if up else step < 0):
                fails.append(f"q={q} {name}")
    report(12, not fails, "all monitors strictly monotone for q = 2, 3" if not fails else f"failed: {fails}")
