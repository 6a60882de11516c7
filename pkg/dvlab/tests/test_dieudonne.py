#!/usr/bin/env python3
"""
Tests for Dieudonné modules, α_p quotients and lattice isogenies
"""

import math
import os
import sys
from fractions import Fraction

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import pytest

from dieudonne import (
    DModule,
    IsogenyData,
    a_number,
    alpha_p_embeddings,
    base_change,
    compose_isogenies,
    conjugate,
    dimension,
    direct_sum,
    dual,
    identity_isogeny,
    is_isomorphic,
    isogeny_from_lattice,
    make_gmn,
    module_from_dict,
    quotient_by_alpha_p,
    quotient_module,
    sublattice_module,
    truncate,
    zero_module,
)
from errors import (
    InvalidParams,
    InvariantViolation,
    NotAlphaP,
    NotAnExtension,
    NotStable,
    PrecisionExhausted,
    RingMismatch,
)
from helpers import g11_g12, random_invertible, seeded, standard_columns
from modular_linalg import elementary_divisors, from_ints, identity, mat_equal, scalar_matrix
from newton import newton_polygon
from padic_base import make_ring
from semilinear import apply, compose

COPRIME = [(m, n) for h in range(1, 7) for m in range(h + 1) for n in [h - m] if math.gcd(m, n) == 1]


def test_g11_matrices():
    ring = make_ring(2, 1, 3)
    G = make_gmn(1, 1, ring)
    expected = from_ints(ring, [[0, 2], [1, 0]])
    assert mat_equal(G.MF, expected)
    assert mat_equal(G.MV, expected)
    e1, e2 = standard_columns(ring, 2)
    assert apply(G.F, e1) == e2 == apply(G.V, e1)


@pytest.mark.parametrize("m,n", COPRIME)
def test_gmn_structure(m, n):
    ring = make_ring(3, 1, 4)
    G = make_gmn(m, n, ring)
    h = m + n
    assert G.rank == h
    assert dimension(G) == m
    p_m = scalar_matrix(ring.p_power(m), h)
    assert mat_equal(G.V.power(h).rows, p_m)
    e1 = standard_columns(ring, h)[0]
    assert apply(G.F.power(m), e1) == apply(G.V.power(n), e1)


@pytest.mark.parametrize("m,n", [(2, 2), (0, 0), (-1, 2), (2, 4)])
def test_gmn_rejects_bad_pairs(m, n):
    with pytest.raises(InvalidParams):
        make_gmn(m, n, make_ring(2, 1, 3))


def test_constructor_checks_fv():
    ring = make_ring(2, 1, 3)
    I = identity(ring, 2)
    with pytest.raises(InvariantViolation):
        DModule.from_matrices(ring, I, I)
    # twists are only visible modulo a
    cubic = make_ring(2, 3, 3)
    G = make_gmn(1, 1, cubic)
    with pytest.raises(InvariantViolation):
        DModule(cubic, G.V, G.F)


def test_direct_sum():
    A = g11_g12(2, 5)
    assert A.rank == 5
    polygon = newton_polygon(A)
    assert polygon == newton_polygon(make_gmn(1, 1, A.ring)).merge(newton_polygon(make_gmn(1, 2, A.ring)))
    assert direct_sum(A, zero_module(A.ring)) == A
    with pytest.raises(RingMismatch):
        direct_sum(A, make_gmn(1, 1, make_ring(3, 1, 5)))


def test_dual_reflects_slopes():
    ring = make_ring(2, 1, 4)
    D = dual(make_gmn(2, 1, ring))
    assert newton_polygon(D).points == ((Fraction(1, 3), 3),)
    assert newton_polygon(dual(make_gmn(1, 1, ring))).points == ((Fraction(1, 2), 2),)
    assert dimension(D) == 1


@pytest.mark.parametrize("m,n", [(1, 1), (2, 1), (1, 2), (3, 1), (1, 0)])
def test_dual_is_an_involution(m, n):
    ring = make_ring(2, 1, 3)
    G = make_gmn(m, n, ring)
    assert is_isomorphic(dual(dual(G)), G)
    assert is_isomorphic(dual(G), make_gmn(n, m, ring))


def test_base_change():
    ring = make_ring(2, 1, 4)
    G = make_gmn(1, 1, ring)
    assert base_change(G, 1) is G
    G2 = base_change(G, 2)
    assert G2.ring.a == 2
    assert newton_polygon(G2) == newton_polygon(G)
    assert base_change(G2, 4) == base_change(G, 4)
    with pytest.raises(NotAnExtension):
        base_change(G2, 3)


def test_truncate():
    G = make_gmn(1, 2, make_ring(3, 1, 5))
    T = truncate(G, 3)
    assert T.ring.N == 3
    assert truncate(G, 5) is G
    with pytest.raises(InvalidParams):
        truncate(T, 4)


def test_conjugation_preserves_the_module():
    ring = make_ring(3, 1, 4)
    A = direct_sum(make_gmn(1, 1, ring), make_gmn(0, 1, ring))
    P = random_invertible(ring, 3, seeded(3))
    B = conjugate(A, P)
    result = is_isomorphic(A, B)
    assert result
    assert result.witness is not None


def test_alpha_p_of_g11():
    ring = make_ring(2, 1, 4)
    gens = alpha_p_embeddings(make_gmn(1, 1, ring))
    assert len(gens) == 1
    assert [x.coeffs for x in gens[0]] == [(0,), (1,)]


@pytest.mark.parametrize("m,n", [(m, n) for m, n in COPRIME if m and n])
def test_alpha_p_is_unique_in_gmn(m, n):
    assert a_number(make_gmn(m, n, make_ring(2, 1, 3))) == 1


def test_alpha_p_counts():
    assert a_number(g11_g12(2, 4)) == 2
    assert a_number(make_gmn(0, 1, make_ring(2, 1, 3))) == 0
    assert a_number(make_gmn(1, 0, make_ring(2, 1, 3))) == 0


def test_quotient_by_alpha_p_of_g11_is_g11():
    ring = make_ring(2, 1, 5)
    G = make_gmn(1, 1, ring)
    x = alpha_p_embeddings(G)[0]
    iso = quotient_by_alpha_p(G, x)
    assert iso.log_degree == 1
    assert iso.target.ring.N == 4
    assert is_isomorphic(iso.target, G)
    same = isogeny_from_lattice(G, [[ring.zero, ring.one]], 1)
    assert same.target_lattice() == iso.target_lattice()
    assert same.target == iso.target


def test_quotient_rejects_non_alpha_p_vectors():
    ring = make_ring(2, 1, 4)
    G = make_gmn(1, 1, ring)
    with pytest.raises(NotAlphaP):
        quotient_by_alpha_p(G, [ring.one, ring.zero])
    with pytest.raises(NotAlphaP):
        quotient_by_alpha_p(G, [ring.from_int(2), ring.zero])


def test_trivial_and_scalar_isogenies():
    A = g11_g12(3, 4)
    ring = A.ring
    iso = isogeny_from_lattice(A, [], 0)
    assert iso.log_degree == 0
    assert iso.target == A
    full = isogeny_from_lattice(A, standard_columns(ring, 5), 1)
    assert full.log_degree == 5
    assert is_isomorphic(full.target, truncate(A, full.target.ring.N))


def test_isogeny_from_unstable_lattice():
    ring = make_ring(2, 1, 4)
    G = make_gmn(1, 1, ring)
    with pytest.raises(NotStable):
        isogeny_from_lattice(G, [[ring.one, ring.zero]], 1)
    with pytest.raises(PrecisionExhausted):
        isogeny_from_lattice(G, [[ring.zero, ring.one]], 4)


def test_composition_adds_degrees():
    ring = make_ring(2, 1, 6)
    G = make_gmn(1, 2, ring)
    first = quotient_by_alpha_p(G, alpha_p_embeddings(G)[0])
    second = quotient_by_alpha_p(first.target, alpha_p_embeddings(first.target)[0])
    both = compose_isogenies(first, second)
    assert both.log_degree == 2
    assert both.denominator == 2
    assert 3 * 2 - sum(elementary_divisors(both.B, ring, 3)) == 2
    assert compose_isogenies(identity_isogeny(G), first).log_degree == 1


def test_isogeny_json():
    ring = make_ring(2, 1, 5)
    G = make_gmn(1, 1, ring)
    iso = quotient_by_alpha_p(G, alpha_p_embeddings(G)[0])
    data = iso.to_dict()
    back = IsogenyData.from_dict(data)
    assert back.log_degree == 1 and back.target == iso.target
    assert module_from_dict(data) == iso.target
    assert module_from_dict(G.to_dict()) == G
    assert module_from_dict({"module": G.to_dict()}) == G


def test_submodule_and_quotient():
    A = g11_g12(2, 4)
    ring = A.ring
    cols = standard_columns(ring, 5)
    sub, B = sublattice_module(A, cols[:2])
    assert sub == make_gmn(1, 1, ring)
    quot = quotient_module(A, cols[:2])
    assert quot == make_gmn(1, 2, ring)
    with pytest.raises(NotStable):
        quotient_module(A, [cols[0]])
    with pytest.raises(InvalidParams):
        quotient_module(A, [[ring.from_int(2) * x for x in cols[0]], cols[1]])


def test_is_isomorphic_answers():
    ring = make_ring(2, 1, 4)
    G21, G12 = make_gmn(2, 1, ring), make_gmn(1, 2, ring)
    assert is_isomorphic(G21, G21).status == "Yes"
    assert is_isomorphic(G21, G12).status == "No"
    assert is_isomorphic(G21, make_gmn(1, 1, ring)).reason == "rank"
    assert is_isomorphic(zero_module(ring), zero_module(ring))


def test_frobenius_and_verschiebung_compose_to_p():
    A = g11_g12(3, 4)
    p_id = scalar_matrix(A.ring.from_int(3), 5)
    assert mat_equal(compose(A.F, A.V).rows, p_id)
    assert mat_equal(compose(A.V, A.F).rows, p_id)
