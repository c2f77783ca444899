"""Seeded random void sets for the randomized checks."""
from __future__ import annotations

import numpy as np

from .lattice import LatticeDomain, VoidSet


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator; every randomized routine draws from one of these."""
    return np.random.Generator(np.random.Philox(int(seed)))


def random_mask_2d(rng, shape, border=2):
    """Random void pattern of one of four kinds, kept ``border`` sites off the edge."""
    m = np.zeros(shape, dtype=bool)
    W, H = shape
    a0, a1 = border, W - border
    b0, b1 = border, H - border
    kind = int(rng.integers(0, 4))
    if kind == 0:
        m[a0:a1, b0:b1] = rng.random((a1 - a0, b1 - b0)) < rng.random()
    elif kind == 1:
        for _ in range(int(rng.integers(1, 6))):
            lo = rng.integers([a0, b0], [a1 - 1, b1 - 1])
            hi = lo + rng.integers(1, 12, 2)
            m[lo[0]:min(hi[0], a1), lo[1]:min(hi[1], b1)] = True
    elif kind == 2:
        x = int(rng.integers(b0, b1))
        m[a0:a1, b0:x] = True
        m[int(rng.integers(a0, a1)), int(rng.integers(b0, b1))] ^= True
    else:
        cut = rng.random(W) < 0.5
        m[a0:a1, b0:b1] = cut[a0:a1, None]
        for _ in range(int(rng.integers(0, 3))):
            m[int(rng.integers(a0, a1)), int(rng.integers(b0, b1))] ^= True
    return m


def random_void_set_2d(rng, shape, border=2) -> VoidSet:
    """Void set on Z^2 (eps = 1) inside the window [0, W) x [0, H)."""
    dom = LatticeDomain.box(1.0, (0, 0), tuple(shape))
    return VoidSet.from_mask(dom, random_mask_2d(rng, shape, border), offset=(0, 0))


def random_laminate(rng, domain: LatticeDomain, density=None) -> VoidSet:
    """Simple coordinate laminate: membership depends on one random axis only."""
    lo, hi = domain.omega_index_box
    axis = int(rng.integers(domain.d))
    p = rng.random() if density is None else density
    layers = rng.random(int(hi[axis] - lo[axis])) < p
    mask = domain.omega_mask()
    olo = lo - domain.u_index_box[0]
    shape = [1] * domain.d
    shape[axis] = -1
    prof = np.zeros(domain.u_shape[axis], dtype=bool)
    prof[int(olo[axis]):int(olo[axis]) + layers.size] = layers
    mask &= prof.reshape(shape)
    return VoidSet.from_mask(domain, mask)


def random_void_set(rng, domain: LatticeDomain, p=None) -> VoidSet:
    """Bernoulli void set on Z_eps(Omega)."""
    p = rng.random() * 0.5 if p is None else p
    mask = domain.omega_mask() & (rng.random(domain.u_shape) < p)
    return VoidSet.from_mask(domain, mask)
