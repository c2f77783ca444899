import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from voidlattice.curvature import (CurvatureModel, box_reduce, box_sum, cell_window, check_eam_window,
                                   curvature_energy, detect_laminate, eam_curvature_energy, eam_density,
                                   eam_lemma_check, eam_neighbor_counts, eam_phi, flat_catalog, is_cubic,
                                   is_cubic_bruteforce, is_flat, is_locally_flat, laminate_of_block,
                                   nonflat_count, window_offsets)
from voidlattice.lattice import LatticeDomain, VoidSet
from voidlattice.sampling import make_rng, random_void_set_2d


def _brute_box(a, lo, hi, op, fill):
    out = np.empty(a.shape, dtype=a.dtype)
    for x in np.ndindex(*a.shape):
        vals = []
        for j in itertools.product(*[range(l, h + 1) for l, h in zip(lo, hi)]):
            y = tuple(np.add(x, j))
            if all(0 <= v < s for v, s in zip(y, a.shape)):
                vals.append(a[y])
            else:
                vals.append(fill)
        out[x] = op(vals)
    return out


@settings(max_examples=30, deadline=None)
@given(arrays(np.int64, (6, 5), elements=st.integers(-5, 5)), st.integers(-3, 1), st.integers(0, 3))
def test_box_reduce_and_sum_match_brute(a, lo, span):
    hi = lo + span
    assert np.array_equal(box_reduce(a, [lo, lo], [hi, hi], "max", -99), _brute_box(a, [lo] * 2, [hi] * 2, max, -99))
    assert np.array_equal(box_reduce(a, [lo, lo], [hi, hi], "min", 99), _brute_box(a, [lo] * 2, [hi] * 2, min, 99))
    assert np.array_equal(box_sum(a, [lo, lo], [hi, hi]), _brute_box(a, [lo] * 2, [hi] * 2, sum, 0))


def test_window_offsets_cover_n_sites():
    for n in range(1, 9):
        lo, hi = window_offsets(n)
        assert hi - lo + 1 == n


def test_cell_window_meets_cube():
    # cells [k - 1/2, k + 3/2) meeting [i - n/2, i + n/2) in sites-relative units
    for n in range(1, 9):
        kmin, kmax = cell_window(n)
        for k in range(-n - 3, n + 3):
            meets = (k - 0.5 < n / 2) and (k + 1.5 > -n / 2)
            assert meets == (kmin <= k <= kmax)


def test_catalog_sizes():
    assert len(flat_catalog(2)) == 6
    assert len(flat_catalog(3)) == 8


def _dom3(n=16):
    return LatticeDomain.box(1.0, (0, 0, 0), (n, n, n), pad=1.0)


def test_half_space_is_flat():
    dom = _dom3()
    E = VoidSet(dom, [c for c in itertools.product(range(16), repeat=3) if c[0] < 8])
    for i in [(7, 7, 7), (8, 4, 4), (3, 10, 10)]:
        assert is_locally_flat(E, i, 4.0)[0]
        assert is_cubic(E, i, 4.0, 4.0)[0]
        assert is_flat(E, i, 4.0, 4.0)


def test_corner_not_locally_flat():
    dom = _dom3()
    E = VoidSet(dom, [c for c in itertools.product(range(16), repeat=3) if c[0] < 8 and c[1] < 8])
    ok, cell = is_locally_flat(E, (8, 8, 8), 4.0)
    assert not ok and cell is not None


def test_isolated_atom_not_cubic():
    dom = _dom3()
    E = VoidSet(dom, [(8, 8, 8)])
    assert not is_cubic(E, (8, 8, 8), 4.0, 4.0)[0]
    assert not is_cubic_bruteforce(E, (8, 8, 8), 4.0, 4.0)


def test_cubic_matches_bruteforce_random():
    rng = np.random.default_rng(5)
    dom = LatticeDomain.box(1.0, (0, 0), (16, 16), pad=1.0)
    for _ in range(60):
        blocks = rng.random((5, 5)) < 0.4
        n = 4
        m = np.kron(blocks, np.ones((n, n), bool))[:16, :16]
        off = rng.integers(0, n, 2)
        m = np.roll(m, tuple(off), axis=(0, 1))
        if rng.random() < 0.3:
            m[tuple(rng.integers(0, 16, 2))] ^= True
        E = VoidSet.from_mask(dom, m, offset=(0, 0))
        i = tuple(int(v) for v in rng.integers(2, 14, 2))
        assert is_cubic(E, i, 4.0, 4.0)[0] == is_cubic_bruteforce(E, i, 4.0, 4.0)


def test_detect_laminate():
    # the profile varies along axis 0
    assert laminate_of_block(np.array([[1, 1], [0, 0]], bool))[0] == 0
    assert laminate_of_block(np.array([[1, 0], [0, 0]], bool)) is None
    dom = _dom3()
    E = VoidSet(dom, [c for c in itertools.product(range(16), repeat=3) if c[2] % 3 == 0])
    axis, prof = detect_laminate(E, ((2, 2, 2), (10, 10, 10)))
    assert axis == 2


def test_curvature_energy_counts_nonflat_sites():
    dom = _dom3()
    model = CurvatureModel(gamma=2.0, eta=4.0, q=2)
    assert curvature_energy(model, VoidSet(dom)) == 0.0
    E = VoidSet(dom, [(8, 8, 8)])
    k = nonflat_count(E, model)
    assert k > 0
    assert curvature_energy(model, E) == pytest.approx(k * model.quantum)
    assert model.quantum == pytest.approx(2.0 * 4.0 ** -3)


def test_model_validation():
    with pytest.raises(ValueError):
        CurvatureModel(0.0, 1.0)
    with pytest.raises(ValueError):
        CurvatureModel(1.0, 1.0, q=1.5)
    with pytest.raises(ValueError):
        CurvatureModel(1.0, 1.0, mode="other")


def test_eam_counts_and_density():
    dom = LatticeDomain.box(1.0, (0, 0), (8, 8))
    E = VoidSet(dom, [(3, 3)])
    assert eam_neighbor_counts(E, (4, 3)) == (3, 4)
    assert eam_neighbor_counts(E, (4, 4)) == (4, 3)
    with pytest.raises(ValueError):
        eam_neighbor_counts(E, (3, 3))
    # density separates all count pairs
    vals = {float(eam_density(a, b)) for a in range(5) for b in range(5)}
    assert len(vals) == 25


def test_eam_half_plane_edge_atoms_admissible():
    dom = LatticeDomain.box(1.0, (0, 0), (16, 16))
    E = VoidSet(dom, [(i, j) for i in range(2, 14) for j in range(2, 8)])
    # an atom on a straight face sees (3, 2)
    assert eam_neighbor_counts(E, (6, 8)) == (3, 2)


def test_eam_window_check():
    dom = LatticeDomain.box(1.0, (0, 0), (8, 8))
    with pytest.raises(ValueError, match="truncates"):
        check_eam_window(VoidSet(dom, [(0, 3)]), ((0, 0), (8, 8)))


def test_eam_identity_small():
    rng = make_rng(11)
    model = CurvatureModel(1.0, 8.0, 2, "eam2d")
    for _ in range(10):
        E = random_void_set_2d(rng, (32, 32))
        p = eam_phi(E, ((0, 0), (32, 32)), model)
        c = eam_curvature_energy(E, model, ((0, 0), (32, 32)))
        assert c == pytest.approx(p, rel=1e-12, abs=0)


def test_eam_lemma_small():
    rng = make_rng(12)
    for _ in range(50):
        assert eam_lemma_check(random_void_set_2d(rng, (32, 32)), 8, 4) == []
