import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voidlattice.lattice import LatticeDomain, VoidSet, VoxelSet, voxelize
from voidlattice.surface import (NeighborModel, broken_bond_counts, continuum_perimeter, density_phi,
                                 discrete_perimeter, exposed_faces, load_neighbor_model, recovery_limsup_check)


def test_model_invariants():
    with pytest.raises(ValueError, match="symmetric"):
        NeighborModel(((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1)), (1, 1, 1, 1, 1))
    with pytest.raises(ValueError, match="sup-norm"):
        NeighborModel(((1, 0), (-1, 0), (0, 1), (0, -1), (2, 0), (-2, 0)), (1,) * 6)
    with pytest.raises(ValueError, match="missing"):
        NeighborModel(((1, 0), (-1, 0)), (1, 1))
    with pytest.raises(ValueError, match="positive"):
        NeighborModel(((1, 0), (-1, 0), (0, 1), (0, -1)), (1, 1, 0, 0))


def test_axis_coefficients():
    m = NeighborModel.nearest_and_diagonal(3, 1.0, 0.5)
    assert len(m.vectors) == 18
    assert np.allclose(m.axis_coefficients(), [1 + 4 * 0.5] * 3)


def test_density_phi():
    m = NeighborModel.nearest(3, 2.0)
    assert density_phi(m, [1, 0, 0]) == 2.0
    assert density_phi(m, np.ones(3) / np.sqrt(3)) == pytest.approx(2 * np.sqrt(3))
    with pytest.raises(ValueError):
        density_phi(m, [0, 0, 0])
    with pytest.raises(ValueError):
        density_phi(m, [1, 1, 0])


def test_loader_roundtrip(tmp_path):
    p = tmp_path / "nb.txt"
    lines = [f"{' '.join(map(str, v))} 1.5" for v in NeighborModel.nearest(2).vectors]
    p.write_text("# nearest\n" + "\n".join(lines) + "\n")
    m = load_neighbor_model(p)
    assert m == NeighborModel.nearest(2, 1.5)
    p.write_text("1 0 1\n")
    with pytest.raises(ValueError):
        load_neighbor_model(p)


def test_single_site_perimeter():
    dom = LatticeDomain.box(0.25, (0, 0, 0), (1, 1, 1), pad=0.25)
    E = VoidSet(dom, [(2, 2, 2)])
    m = NeighborModel.nearest(3)
    assert discrete_perimeter(E, m) == pytest.approx(6 * 0.25 ** 2)
    assert broken_bond_counts(E, m).tolist() == [1] * 6


def test_empty_and_full():
    dom = LatticeDomain.box(0.25, (0, 0), (1, 1))
    m = NeighborModel.nearest(2)
    assert discrete_perimeter(VoidSet(dom), m) == 0.0
    full = VoidSet.from_mask(dom, dom.omega_mask())
    # bonds leaving Z(U) are not counted, and U = Omega here
    assert discrete_perimeter(full, m) == 0.0


def test_region_restriction():
    dom = LatticeDomain.box(1.0, (0, 0), (8, 8), pad=1.0)
    E = VoidSet(dom, [(1, 1), (6, 6)])
    m = NeighborModel.nearest(2)
    assert discrete_perimeter(E, m, ((0, 0), (4, 4))) == 4.0


def test_box_perimeter_equals_continuum_nearest():
    dom = LatticeDomain.box(0.125, (0, 0, 0), (1, 1, 1), pad=0.125)
    idx = list(itertools.product(range(2, 5), range(3, 7), range(1, 3)))
    E = VoidSet(dom, idx)
    m = NeighborModel.nearest(3, 1.7)
    assert discrete_perimeter(E, m) == continuum_perimeter(voxelize(E), m)


def test_exposed_faces_cube():
    A = VoxelSet(1.0, np.array([(0, 0, 0)]))
    c, ax = exposed_faces(A)
    assert len(c) == 6
    assert sorted(ax.tolist()) == [0, 0, 1, 1, 2, 2]


@settings(max_examples=30, deadline=None)
@given(st.sets(st.tuples(st.integers(1, 5), st.integers(1, 5)), min_size=1, max_size=12))
def test_nearest_perimeter_is_voxel_perimeter(cells):
    dom = LatticeDomain.box(1.0, (0, 0), (7, 7), pad=1.0)
    E = VoidSet(dom, sorted(cells))
    m = NeighborModel.nearest(2)
    assert discrete_perimeter(E, m) == continuum_perimeter(voxelize(E), m)


def test_recovery_limsup_rows():
    E = VoxelSet(0.25, np.array([(0, 0, 0), (1, 0, 0)]), (0.375, 0.375, 0.375))
    m = NeighborModel.nearest(3)
    rows = recovery_limsup_check(E, m, ((0, 0, 0), (1, 1, 1)), [1 / 8, 1 / 16], [1 / 4, 1 / 4])
    assert [r["gap"] for r in rows] == [0.0, 0.0]
    with pytest.raises(ValueError, match="compactly"):
        recovery_limsup_check(E, m, ((0.3, 0.3, 0.3), (1, 1, 1)), [1 / 8], [1 / 4])
