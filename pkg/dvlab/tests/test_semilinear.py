#!/usr/bin/env python3
"""
Tests for twisted operators, lattices, Fitting decompositions and fixed points
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dieudonne import direct_sum, make_gmn
from errors import BudgetExceeded, DimensionMismatch, NotIntegral, NotSolvable, PrecisionExhausted, RingMismatch
from helpers import random_matrix, random_stable_sublattice, seeded
from modular_linalg import identity, mat_vec
from padic_base import make_ring
from semilinear import (
    Lattice,
    SemiLinOp,
    apply,
    compose,
    divide_by_p,
    enumerate_overlattices,
    fitting_decomposition,
    fixed_points,
    flatten,
    linearize,
    unflatten,
)

RINGS = [(2, 1, 4), (3, 1, 3), (2, 2, 3), (2, 3, 2)]


def _random_op(ring, h, twist, rng):
    return SemiLinOp.from_matrix(ring, random_matrix(ring, h, h, rng), twist)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(RINGS), st.integers(1, 3), st.integers(0, 10_000))
def test_composition_is_associative_and_matches_application(params, h, seed):
    rng = seeded(seed)
    ring = make_ring(*params)
    f, g, k = (_random_op(ring, h, t, rng) for t in (1, -1, 2))
    assert compose(f, compose(g, k)) == compose(compose(f, g), k)
    v = [ring.random_element(rng) for _ in range(h)]
    assert apply(compose(f, g), v) == apply(f, apply(g, v))
    assert compose(f, g).twist == 0


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(RINGS), st.integers(1, 3), st.integers(-2, 2), st.integers(0, 10_000))
def test_linearization_agrees_with_application(params, h, twist, seed):
    rng = seeded(seed)
    ring = make_ring(*params)
    op = _random_op(ring, h, twist, rng)
    v = [ring.random_element(rng) for _ in range(h)]
    assert mat_vec(linearize(op), flatten(v)) == flatten(apply(op, v))
    assert unflatten(ring, flatten(v)) == v


def test_operator_checks():
    ring = make_ring(2, 1, 3)
    with pytest.raises(DimensionMismatch):
        SemiLinOp.from_matrix(ring, [[ring.one, ring.zero]], 1)
    op = SemiLinOp.identity(ring, 2)
    with pytest.raises(DimensionMismatch):
        apply(op, [ring.one])
    other = SemiLinOp.identity(make_ring(3, 1, 3), 2)
    with pytest.raises(RingMismatch):
        compose(op, other)


def test_twists_are_compared_modulo_a():
    ring = make_ring(2, 2, 3)
    I = identity(ring, 2)
    assert SemiLinOp.from_matrix(ring, I, 1) == SemiLinOp.from_matrix(ring, I, 3)
    assert SemiLinOp.from_matrix(ring, I, 1) != SemiLinOp.from_matrix(ring, I, 0)


def test_divide_by_p():
    ring = make_ring(2, 1, 5)
    G = make_gmn(1, 1, ring)
    square = G.F.power(2)
    reduced = divide_by_p(square, 1)
    assert reduced.ring.N == 4
    assert reduced == SemiLinOp.from_matrix(reduced.ring, identity(reduced.ring, 2), 2)
    with pytest.raises(NotIntegral):
        divide_by_p(G.F, 1)
    with pytest.raises(PrecisionExhausted):
        divide_by_p(square, 5)
    assert divide_by_p(G.F, 0) is G.F


def test_lattice_equality_ignores_generators():
    ring = make_ring(3, 1, 4)
    p = ring.from_int(3)
    one, zero = ring.one, ring.zero
    L1 = Lattice(ring, 2, [[one, zero], [zero, p]])
    L2 = Lattice(ring, 2, [[one, p], [zero, p], [p, zero]])
    assert L1 == L2
    assert hash(L1) == hash(L2)
    assert L1.divisors == (0, 1)
    assert L1.colength() == 1
    free = L1.free_basis()
    assert len(free) == 1 and any(x.valuation == 0 for x in free[0])
    assert L1.contains([ring.from_int(5), ring.from_int(6)])
    assert not L1.contains([zero, one])
    with pytest.raises(NotSolvable):
        L1.coordinates([zero, one])


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(RINGS), st.integers(1, 3), st.integers(0, 10_000))
def test_lattice_coordinates_reconstruct_members(params, h, seed):
    rng = seeded(seed)
    ring = make_ring(*params)
    gens = random_matrix(ring, rng.randint(1, h + 1), h, rng)
    L = Lattice(ring, h, gens)
    for g in gens:
        y = L.coordinates(g)
        total = [ring.zero] * h
        for c, b in zip(y, L.basis):
            total = [x + c * z for x, z in zip(total, b)]
        assert total == list(g)
    assert all(L.contains(list(b)) for b in L.basis)
    assert L.issubset(Lattice.full(ring, h))
    assert Lattice.zero(ring, h).issubset(L)
    assert (L + Lattice.zero(ring, h)) == L


def test_zero_lattice():
    ring = make_ring(2, 1, 3)
    Z = Lattice.zero(ring, 2)
    assert Z.rank == 0
    assert Z.colength() == 6
    assert Z.length() == 0


def test_f_v_image_is_stable():
    ring = make_ring(2, 1, 5)
    A = direct_sum(make_gmn(1, 1, ring), make_gmn(1, 2, ring))
    rng = seeded(7)
    for _ in range(5):
        L = random_stable_sublattice(A, rng)
        assert L.is_stable(A.F) and L.is_stable(A.V)
        assert L.colength() <= A.rank


def test_fitting_decomposition_separates_etale_part():
    ring = make_ring(2, 1, 3)
    A = direct_sum(make_gmn(1, 1, ring), make_gmn(1, 0, ring))
    fit = fitting_decomposition(A.F)
    assert fit.bij.rank == 1 and fit.nil.rank == 2
    assert fit.bij.is_free and fit.nil.is_free
    assert fit.bij.is_stable(A.F) and fit.nil.is_stable(A.F)
    assert (fit.bij + fit.nil) == Lattice.full(ring, 3)


def test_fitting_decomposition_of_rank_zero():
    ring = make_ring(2, 1, 3)
    fit = fitting_decomposition(SemiLinOp.from_matrix(ring, [], 1))
    assert fit.bij.rank == 0 and fit.nil.rank == 0


@pytest.mark.parametrize("a", [1, 2, 3])
def test_fixed_points_of_etale_frobenius(a):
    ring = make_ring(2, a, 4)
    F = make_gmn(1, 0, ring).F
    fixed = fixed_points(F)
    assert fixed.scalars.a == 1
    assert fixed.rank == 1
    assert fixed.spans_module()
    for b in fixed.basis:
        assert apply(F, list(b)) == list(b)


def test_fixed_points_of_p_times_frobenius_vanish():
    ring = make_ring(3, 1, 3)
    assert fixed_points(make_gmn(0, 1, ring).F).rank == 0
    assert fixed_points(make_gmn(0, 1, ring).V).rank == 1


def test_fixed_points_of_a_power_live_over_a_larger_subring():
    ring = make_ring(2, 2, 3)
    F2 = make_gmn(1, 0, ring).F.power(2)
    fixed = fixed_points(F2)
    assert fixed.scalars.a == 2
    assert fixed.spans_module()


@pytest.mark.parametrize("p", [2, 3])
def test_overlattice_counts_in_rank_two(p):
    ring = make_ring(p, 1, 3)
    assert len(enumerate_overlattices(ring, 2, 0)) == 1
    assert len(enumerate_overlattices(ring, 2, 1)) == p + 1
    # p^{-1}M plus the p^2 + p cyclic extensions
    assert len(enumerate_overlattices(ring, 2, 2)) == p * p + p + 1


def test_overlattice_counts_over_a_larger_residue_field():
    ring = make_ring(2, 2, 2)
    assert len(enumerate_overlattices(ring, 2, 1)) == 5
    assert len(enumerate_overlattices(ring, 3, 1)) == 21


def test_overlattices_are_deterministic_and_parallel_safe():
    ring = make_ring(3, 1, 3)
    serial = enumerate_overlattices(ring, 2, 2)
    threaded = enumerate_overlattices(ring, 2, 2, parallel=3)
    assert [L.key for L in serial] == [L.key for L in threaded]
    for L in serial:
        assert L.colength() == 2 * 2 - 2


def test_overlattice_cap(monkeypatch):
    monkeypatch.setenv("DVLAB_CANDIDATE_CAP", "2")
    with pytest.raises(BudgetExceeded):
        enumerate_overlattices(make_ring(2, 1, 3), 2, 1)
