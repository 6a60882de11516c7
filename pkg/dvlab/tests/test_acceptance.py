#!/usr/bin/env python3
"""
End-to-end checks with exact expected values: slope tables, csd criteria, filtrations,
descent, isogeny counts, saturation and the two families
"""

import math
import os
import sys
from fractions import Fraction

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import pytest

from dieudonne import base_change, conjugate, isogeny_from_lattice, is_isomorphic, make_gmn, sublattice_module
from families import build_example42, example41_sweep, verify_no_csd_isogeny
from helpers import g11_g12, gmn_sum, random_conjugate, random_invertible, random_stable_sublattice, seeded
from modular_linalg import change_ring, mat_vec
from newton import newton_polygon
from oracles import count_fv_stable_of_length, fv_stable_overlattices
from padic_base import make_ring
from semilinear import Lattice
from slope import (
    SlopeData,
    csd_saturate,
    descend_finite_field,
    enumerate_csd_isogenies,
    is_completely_slope_divisible,
    phi_etale_split,
    phi_stable_overlattices,
    slope_filtration,
)

COPRIME = [(m, h - m) for h in range(1, 7) for m in range(h + 1) if math.gcd(m, h - m) == 1]
G11_G12_DATA = SlopeData(6, (3, 2))


@pytest.mark.parametrize("p", [2, 3])
def test_gmn_slope_table(p):
    ring = make_ring(p, 1, 7)
    for m, n in COPRIME:
        assert newton_polygon(make_gmn(m, n, ring)).points == ((Fraction(m, m + n), m + n),)


@pytest.mark.parametrize("p", [2, 3])
@pytest.mark.parametrize("m,n", COPRIME)
def test_gmn_is_completely_slope_divisible(p, m, n):
    h = m + n
    G = make_gmn(m, n, make_ring(p, 1, 3 * h + 3))
    sd = SlopeData(h, (m,))
    assert is_completely_slope_divisible(G, sd)
    for t in (2, 3):
        assert is_completely_slope_divisible(G, sd.scaled(t))


@pytest.mark.parametrize("p", [2, 3])
def test_phi_etale_splitting(p):
    ring = make_ring(p, 1, 4)
    split = phi_etale_split(gmn_sum(ring, (0, 1), (1, 1)), 0, 1)
    assert (split.nil_part.rank, split.etale_part.rank) == (2, 1)
    assert is_isomorphic(split.etale_part, make_gmn(0, 1, split.etale_part.ring))


def test_slope_filtration_is_unique():
    A = g11_g12(2, 10)
    reference = slope_filtration(A)
    assert reference.slopes == (Fraction(1, 2), Fraction(1, 3))
    rng = seeded(2024)
    for _ in range(20):
        P = random_invertible(A.ring, 5, rng)
        filtration = slope_filtration(conjugate(A, P))
        assert filtration.slopes == reference.slopes
        N = min(filtration.module.ring.N, reference.module.ring.N)
        small = A.ring.truncate(N)
        P_small = change_ring(P, small)
        for step, expected in zip(filtration.steps, reference.steps):
            mapped = [mat_vec(P_small, [x.truncate(small) for x in b]) for b in step.basis]
            want = [[x.truncate(small) for x in b] for b in expected.basis]
            assert Lattice(small, 5, mapped) == Lattice(small, 5, want)


@pytest.mark.parametrize("p", [2, 3])
@pytest.mark.parametrize("seed", range(20))
def test_descent_to_the_quadratic_subfield(p, seed):
    G = base_change(make_gmn(1, 1, make_ring(p, 1, 6)), 4)
    A, _ = random_conjugate(G, seeded(1000 * p + seed))
    sd = SlopeData(2, (1,))
    result = descend_finite_field(A, sd)
    assert result.model.ring.a == 2
    assert result.model.rank == 2
    B = [list(r) for r in result.witness]
    assert conjugate(result.module, B) == base_change(result.model, 4)


@pytest.mark.parametrize("p", [2, 3])
def test_isogeny_count_of_g11_over_a_quadratic_field(p):
    A = base_change(make_gmn(1, 1, make_ring(p, 1, 4)), 2)
    sd = SlopeData(2, (1,))
    assert len(phi_stable_overlattices(A, 1, sd)) == p * p + 1
    assert len(enumerate_csd_isogenies(A, 1, sd)) == count_fv_stable_of_length(A, 1)


@pytest.mark.parametrize("seed", range(50))
def test_saturation_of_perturbed_lattices(seed):
    M = g11_g12(2, 20)
    S = random_stable_sublattice(M, seeded(seed))
    A, _ = sublattice_module(M, [list(b) for b in S.basis])
    iso = csd_saturate(A, G11_G12_DATA)
    # M itself is a csd overlattice of A
    assert iso.log_degree <= min(4, sum(S.divisors))
    assert is_completely_slope_divisible(iso.target, G11_G12_DATA)
    if iso.log_degree == 0:
        return
    for L, length in fv_stable_overlattices(A, 2, max_length=iso.log_degree - 1):
        smaller = isogeny_from_lattice(A, [list(b) for b in L.basis], 2)
        assert smaller.log_degree == length
        assert not is_completely_slope_divisible(smaller.target, G11_G12_DATA)


@pytest.mark.parametrize("p", [2, 3])
@pytest.mark.parametrize("a", [1, 2])
def test_family_without_slope_filtration(p, a):
    result = example41_sweep(p, 5, a, parallel=2)
    assert result.constant
    assert result.polygon.points == ((Fraction(1, 3), 3), (Fraction(1, 2), 2))
    for t, order in result.kernel_orders:
        assert order == (0 if any(t) else 1)


def test_glued_group_has_no_csd_isogeny():
    report = verify_no_csd_isogeny(build_example42(2, 6), 2)
    assert report.mismatches == [1]
    assert report.no_glued_isogeny
    for _, candidates in report.levels:
        assert candidates
        for c in candidates:
            assert c.beta1[1] - c.beta1[0] == 1
