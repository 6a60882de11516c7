"""
Random data and small constructions shared by the tests
"""

import os
import random
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from dieudonne import DModule, conjugate, direct_sum, make_gmn
from modular_linalg import column, identity, is_invertible
from padic_base import make_ring
from semilinear import Lattice, apply

SMALL_PAIRS = [(0, 1), (1, 0), (1, 1), (1, 2), (2, 1)]


def random_matrix(ring, rows, cols, rng):
    return [[ring.random_element(rng) for _ in range(cols)] for _ in range(rows)]


def random_invertible(ring, h, rng):
    while True:
        P = random_matrix(ring, h, h, rng)
        if is_invertible(P):
            return P


def random_conjugate(A: DModule, rng):
    """(P^{-1}·A·σ(P), P) for a random invertible P."""
    if A.rank == 0:
        return A, []
    P = random_invertible(A.ring, A.rank, rng)
    return conjugate(A, P), P


def gmn_sum(ring, *pairs) -> DModule:
    out = make_gmn(*pairs[0], ring)
    for m, n in pairs[1:]:
        out = direct_sum(out, make_gmn(m, n, ring))
    return out


def g11_g12(p=2, N=10, a=1) -> DModule:
    return gmn_sum(make_ring(p, a, N), (1, 1), (1, 2))


def fv_closure(A: DModule, gens) -> Lattice:
    """Smallest F,V-stable lattice containing gens."""
    ring, h = A.ring, A.rank
    current = [list(g) for g in gens]
    while True:
        L = Lattice(ring, h, current)
        images = []
        for b in L.basis:
            for op in (A.F, A.V):
                v = apply(op, list(b))
                if not L.contains(v):
                    images.append(v)
        if not images:
            return L
        current = [list(b) for b in L.basis] + images


def random_stable_sublattice(A: DModule, rng, extra=None) -> Lattice:
    """
    FM + VM plus `extra` random vectors (default 0 or 1).

    Every lattice between FM + VM and M is F,V-stable; the colength is at most a(M).
    """
    ring, h = A.ring, A.rank
    if extra is None:
        extra = rng.randint(0, 1)
    gens = [apply(op, b) for op in (A.F, A.V) for b in standard_columns(ring, h)]
    gens += [[ring.random_element(rng) for _ in range(h)] for _ in range(extra)]
    return Lattice(ring, h, gens)


def standard_columns(ring, h):
    I = identity(ring, h)
    return [column(I, j) for j in range(h)]


def seeded(seed):
    return random.Random(seed)
