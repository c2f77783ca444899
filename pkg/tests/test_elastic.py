import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from voidlattice.elastic import (CellEnergyModel, Displacement, SolverParams, affine_map, cell_energy,
                                 cube_simplices, dirichlet_region, discrete_and_affine_gradients,
                                 discrete_gradient, elastic_energy, elastic_energy_and_gradient,
                                 gradient_comparison_constant, minimize_elastic, neighbour_slots,
                                 orientation_ok, project_rigid_complement, projector, q_bulk, q_bulk_exact,
                                 reference_cell, rigid_basis, spring_pairs, symmetric_discrete_gradient_field)
from voidlattice.lattice import LatticeDomain, VoidSet

finite = st.floats(-1, 1, allow_nan=False)


def test_reference_cell_columns():
    Z = reference_cell(3)
    assert Z.shape == (3, 8)
    assert np.allclose(Z.sum(axis=1), 0)
    assert np.allclose(Z[:, 5], [0.5, -0.5, 0.5])


def test_rigid_basis_dimension():
    for d, dim in ((2, 3), (3, 6)):
        B = rigid_basis(d)
        assert B.shape[0] == dim
        assert np.allclose(B @ B.T, np.eye(dim))


def test_projector_idempotent_symmetric():
    P = projector(3)
    assert np.allclose(P @ P, P, atol=1e-14)
    assert np.allclose(P, P.T, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(arrays(float, (3, 3), elements=finite))
def test_projection_of_affine_is_symmetric_part(F):
    Z = reference_cell(3)
    out = project_rigid_complement(F @ Z)
    assert np.allclose(out, 0.5 * (F + F.T) @ Z, atol=1e-12)


def test_discrete_gradient_of_affine_map():
    dom = LatticeDomain.box(0.25, (0, 0, 0), (1, 1, 1), pad=0.25)
    F = np.array([[0.1, 0.2, 0], [0, 0.3, 0], [0.05, 0, -0.1]])
    u = Displacement.affine(dom, F)
    delta = 0.01
    G = discrete_gradient(u, (1, 1, 1), delta)
    assert np.allclose(G, reference_cell(3) + delta * F @ reference_cell(3))


def test_symmetric_gradient_field_affine():
    dom = LatticeDomain.box(0.25, (0, 0), (1, 1), pad=0.25)
    F = np.array([[0.1, 0.4], [0.0, -0.2]])
    u = Displacement.affine(dom, F)
    e = symmetric_discrete_gradient_field(u, None, 1e-3)
    ulo = dom.u_index_box[0]
    i = np.array([1, 2]) - ulo
    assert np.allclose(e[tuple(i)], 0.5 * (F + F.T) @ reference_cell(2), atol=1e-9)


def test_spring_pairs_counts():
    p3 = spring_pairs(3)
    assert sum(1 for p in p3 if p[4] == 0) == 12
    assert sum(1 for p in p3 if p[4] == 1) == 12
    p2 = spring_pairs(2)
    assert sum(1 for p in p2 if p[4] == 0) == 4 and sum(1 for p in p2 if p[4] == 1) == 2


def test_bulk_zero_at_rest_and_rotations():
    m = CellEnergyModel()
    Z = reference_cell(3)
    assert m.bulk(Z) == 0.0
    R = Rotation.random(20, random_state=3).as_matrix()
    assert np.all(m.bulk(R @ Z) <= 1e-12)


def test_uniform_stretch_oracle():
    m = CellEnergyModel(K1=1.3, K2=0.7)
    t = 1e-3
    val = float(m.bulk((1 + t) * reference_cell(3)))
    assert abs(val - (0.75 * 1.3 * t ** 2 + 3 * 0.7 * t ** 2)) <= 10 * t ** 3


def test_q_bulk_matches_closed_form():
    m = CellEnergyModel()
    Q = q_bulk(m, 2)
    rng = np.random.default_rng(1)
    for _ in range(5):
        G = rng.normal(size=(2, 4))
        assert Q(G) == pytest.approx(q_bulk_exact(m, G), rel=1e-5, abs=1e-8)


def test_orientation_flags_reflection():
    Z = reference_cell(3)
    assert orientation_ok(Z)
    assert not orientation_ok(np.diag([-1, 1, 1]) @ Z)


def test_chi_penalty_added_on_inversion():
    m = CellEnergyModel(chi_penalty=5.0)
    Z = reference_cell(2)
    inverted = np.diag([-1.0, 1.0]) @ Z
    assert m.bulk(inverted) == pytest.approx(CellEnergyModel().bulk(inverted) + 5.0)


def test_neighbour_slots_exclude_voids():
    dom = LatticeDomain.box(1.0, (0, 0), (3, 3), pad=1.0)
    E = VoidSet(dom, [(1, 1)])
    slots = neighbour_slots(dom, E)
    rel = np.array([0, 0]) - dom.u_index_box[0]
    # cell at (0, 0) has vertices (0,0), (1,0), (0,1), (1,1); the last is void
    assert slots[tuple(rel)].tolist() == [True, True, True, False]


def test_cell_energy_rejects_void_site():
    dom = LatticeDomain.box(1.0, (0, 0), (3, 3), pad=1.0)
    E = VoidSet(dom, [(1, 1)])
    u = Displacement(dom, E=E)
    with pytest.raises(ValueError, match="occupied"):
        cell_energy(CellEnergyModel(), (1, 1), u, E, 0.1)


def test_affine_energy_density():
    m = CellEnergyModel()
    dom = LatticeDomain.box(0.125, (0, 0, 0), (1, 1, 1), pad=0.125)
    F = np.diag([0.1, 0.0, 0.0])
    delta = 1e-4
    u = Displacement.affine(dom, F)
    e = elastic_energy(m, u, None, delta)
    half_q = 0.5 * q_bulk_exact(m, F @ reference_cell(3))
    assert e == pytest.approx(half_q, rel=1e-3)


def test_energy_gradient_matches_finite_differences():
    m = CellEnergyModel(K1=1.0, K2=0.5)
    dom = LatticeDomain.box(0.25, (0, 0), (1, 1), pad=0.25)
    E = VoidSet(dom, [(1, 2)])
    rng = np.random.default_rng(4)
    u = Displacement(dom, rng.normal(scale=0.3, size=dom.u_shape + (2,)), affine_map(np.eye(2) * 0.1), E)
    delta = 0.05
    _, g = elastic_energy_and_gradient(m, u, E, delta)
    free = np.argwhere(u.free_mask())
    h = 1e-6
    for site in free[:6]:
        for k in range(2):
            up, dn = u.copy(), u.copy()
            up.values[tuple(site) + (k,)] += h
            dn.values[tuple(site) + (k,)] -= h
            fd = (elastic_energy(m, up, E, delta) - elastic_energy(m, dn, E, delta)) / (2 * h)
            assert g[tuple(site) + (k,)] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_minimizer_never_increases_energy():
    m = CellEnergyModel()
    dom = LatticeDomain.box(0.25, (0, 0), (1, 1), pad=0.25)
    E = VoidSet(dom, [(1, 1), (2, 1)])
    F = np.array([[0.1, 0.05], [0.0, -0.05]])
    res = minimize_elastic(m, dom, E, affine_map(F), 1e-2, SolverParams(tol=1e-9))
    assert res.energy <= res.initial_energy + 1e-15
    assert res.converged


def test_minimizer_zero_start_reaches_affine_energy():
    m = CellEnergyModel()
    dom = LatticeDomain.box(0.25, (0, 0), (1, 1), pad=0.25)
    F = np.diag([0.1, 0.0])
    reg = dirichlet_region(dom)
    a = minimize_elastic(m, dom, None, affine_map(F), 1e-3, SolverParams(tol=1e-10), region=reg)
    z = minimize_elastic(m, dom, None, affine_map(F), 1e-3, SolverParams(tol=1e-10, init="zero"), region=reg)
    assert z.energy == pytest.approx(a.energy, rel=1e-6)


def test_cube_simplex_counts():
    assert len(cube_simplices(2)) == 4
    assert len(cube_simplices(3)) == 24


def test_gradient_comparison_constant():
    assert gradient_comparison_constant(2) == pytest.approx(1.0)
    assert gradient_comparison_constant(3) == pytest.approx(2.0)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (8, 3), elements=finite))
def test_gradient_comparison_inequality(v):
    lhs, rhs = discrete_and_affine_gradients(v)
    assert lhs <= gradient_comparison_constant(3) * rhs * (1 + 1e-9) + 1e-12
