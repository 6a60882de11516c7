#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
σ^t-twisted linear algebra over W_N(F_{p^a}).

An operator is a matrix M with a twist t and acts by v ↦ M·σ^t(v) (columns are the images
of the basis vectors). Lattices are submodules of the free module R^h, kept with a Smith
basis and a canonical Howell form.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

from loguru import logger

from config import get_candidate_cap, resolve_workers
from errors import (
    BudgetExceeded,
    DimensionMismatch,
    InvalidParams,
    NoStabilization,
    NotIntegral,
    NotSolvable,
    PrecisionExhausted,
    RingMismatch,
)
from modular_linalg import (
    Matrix,
    SubfieldEmbedding,
    Vector,
    column,
    frob_matrix,
    frob_vector,
    from_columns,
    howell_form,
    identity,
    inverse,
    kernel,
    mat_equal,
    mat_mul,
    mat_sub,
    mat_vec,
    matrix_from_json,
    matrix_to_json,
    matrix_valuation,
    prime_ring,
    rank_mod_p,
    scalar_matrix,
    smith_normal_form,
    subfield_embedding,
)
from padic_base import INF, Ring, make_ring


@dataclass(frozen=True, eq=False)
class SemiLinOp:
    """v ↦ matrix·σ^twist(v) on R^h"""
    ring: Ring
    matrix: tuple
    twist: int = 0

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.matrix)
        h = len(rows)
        for r in rows:
            if len(r) != h:
                raise DimensionMismatch(f"operator matrix must be square, got a row of length {len(r)} in rank {h}")
            for x in r:
                if x.ring != self.ring:
                    raise RingMismatch(f"entry over {x.ring}, operator over {self.ring}")
        object.__setattr__(self, "matrix", rows)

    @classmethod
    def from_matrix(cls, ring: Ring, matrix: Matrix, twist: int = 0) -> "SemiLinOp":
        return cls(ring, tuple(tuple(r) for r in matrix), twist)

    @classmethod
    def identity(cls, ring: Ring, h: int) -> "SemiLinOp":
        return cls.from_matrix(ring, identity(ring, h), 0)

    @property
    def rank(self) -> int:
        return len(self.matrix)

    @property
    def rows(self) -> Matrix:
        return [list(r) for r in self.matrix]

    def __eq__(self, other):
        if not isinstance(other, SemiLinOp):
            return NotImplemented
        a = self.ring.a
        return (
            self.ring == other.ring
            and (self.twist - other.twist) % a == 0
            and mat_equal(self.rows, other.rows)
        )

    def __hash__(self):
        return hash((self.ring.params, self.twist % self.ring.a, tuple(x.coeffs for r in self.matrix for x in r)))

    def __repr__(self):
        return f"SemiLinOp(rank={self.rank}, twist={self.twist}, ring={self.ring})"

    def apply(self, v: Vector) -> Vector:
        return apply(self, v)

    def compose(self, g: "SemiLinOp") -> "SemiLinOp":
        return compose(self, g)

    def power(self, k: int) -> "SemiLinOp":
        if k < 0:
            raise InvalidParams("negative operator power")
        result = SemiLinOp.identity(self.ring, self.rank)
        for _ in range(k):
            result = compose(self, result)
        return result

    def change_basis(self, P: Matrix, P_inv: Optional[Matrix] = None) -> "SemiLinOp":
        """Matrix in the basis given by the columns of P: P^{-1}·M·σ^t(P)."""
        if P_inv is None:
            P_inv = inverse(P)
        m = mat_mul(mat_mul(P_inv, self.rows), frob_matrix(P, self.twist))
        return SemiLinOp.from_matrix(self.ring, m, self.twist)

    def truncate(self, ring: Ring) -> "SemiLinOp":
        return SemiLinOp.from_matrix(ring, [[x.truncate(ring) for x in r] for r in self.matrix], self.twist)

    def content(self):
        return matrix_valuation(self.rows)

    def to_dict(self) -> dict:
        return {"twist": self.twist, "matrix": matrix_to_json(self.rows)}

    @classmethod
    def from_dict(cls, ring: Ring, data: dict) -> "SemiLinOp":
        return cls.from_matrix(ring, matrix_from_json(ring, data["matrix"]), int(data.get("twist", 0)))


def apply(op: SemiLinOp, v: Vector) -> Vector:
    """op(v) = M·σ^t(v)."""
    if len(v) != op.rank:
        raise DimensionMismatch(f"vector of length {len(v)} for an operator of rank {op.rank}")
    if op.rank == 0:
        return []
    return mat_vec(op.rows, frob_vector(v, op.twist))


def compose(f: SemiLinOp, g: SemiLinOp) -> SemiLinOp:
    """v ↦ f(g(v)): matrix M_f·σ^{t_f}(M_g), twist t_f + t_g."""
    if f.ring != g.ring:
        raise RingMismatch(f"{f.ring} vs {g.ring}")
    if f.rank != g.rank:
        raise DimensionMismatch(f"rank {f.rank} vs rank {g.rank}")
    m = mat_mul(f.rows, frob_matrix(g.rows, f.twist))
    return SemiLinOp.from_matrix(f.ring, m, f.twist + g.twist)


def divide_by_p(op: SemiLinOp, r: int) -> SemiLinOp:
    """
    p^{-r}·op over the ring of precision N - r.

    Raises NotIntegral when an entry has valuation < r.
    """
    if r == 0:
        return op
    ring = op.ring
    if ring.N - r < 1:
        raise PrecisionExhausted(f"dividing by p^{r} leaves no precision in {ring}")
    content = op.content()
    if content < r:
        raise NotIntegral(f"p^{r} does not divide the operator (content {content})")
    target = ring.truncate(ring.N - r)
    m = [[x.divexact_p(r).truncate(target) for x in row] for row in op.matrix]
    return SemiLinOp.from_matrix(target, m, op.twist)


def linearize(op: SemiLinOp) -> Matrix:
    """Matrix over Z/p^N in the basis x^i·e_j (index j·a + i)."""
    ring = op.ring
    a, h = ring.a, op.rank
    prime = prime_ring(ring)
    powers = [ring.frobenius(ring.gen ** i, op.twist) for i in range(a)]
    out = [[prime.zero] * (h * a) for _ in range(h * a)]
    for j in range(h):
        for i in range(a):
            col = j * a + i
            for k in range(h):
                entry = op.matrix[k][j]
                if entry.is_zero():
                    continue
                image = entry * powers[i]
                for i2, c in enumerate(image.coeffs):
                    if c:
                        out[k * a + i2][col] = prime.from_int(c)
    return out


def flatten(v: Vector) -> Vector:
    """Coordinates of a vector of R^h over Z/p^N, index j·a + i."""
    if not v:
        return []
    prime = prime_ring(v[0].ring)
    return [prime.from_int(c) for x in v for c in x.coeffs]


def unflatten(ring: Ring, w: Vector) -> Vector:
    """Inverse of flatten."""
    a = ring.a
    return [ring.element([c.coeffs[0] for c in w[j * a:(j + 1) * a]]) for j in range(len(w) // a)]


class Lattice:
    """
    Submodule of R^h given by generators.

    The basis is the Smith basis p^{v_i}·c_i (c_i columns of an invertible matrix), the
    divisors are the v_i. Equality and hashing use the canonical Howell form, so two
    lattices compare equal exactly when they are equal as subsets.
    """

    __slots__ = ("ring", "ambient_rank", "basis", "divisors", "howell", "_left")

    def __init__(self, ring: Ring, ambient_rank: int, generators: Sequence[Vector] = ()):
        self.ring = ring
        self.ambient_rank = ambient_rank
        gens = [list(g) for g in generators if any(not x.is_zero() for x in g)]
        for g in gens:
            if len(g) != ambient_rank:
                raise DimensionMismatch(f"generator of length {len(g)} in rank {ambient_rank}")
        basis, divisors = [], []
        left = identity(ring, ambient_rank)
        if gens:
            snf = smith_normal_form(from_columns(gens, ambient_rank), ring, len(gens))
            left = snf.left
            left_inv = inverse(left)
            for i, v in enumerate(snf.diag):
                if v == INF:
                    continue
                pv = ring.p_power(v)
                basis.append(tuple(pv * x for x in column(left_inv, i)))
                divisors.append(v)
        self.basis = tuple(basis)
        self.divisors = tuple(divisors)
        self.howell = howell_form(ring, basis, ambient_rank)
        self._left = left

    @classmethod
    def full(cls, ring: Ring, h: int) -> "Lattice":
        return cls(ring, h, identity(ring, h))

    @classmethod
    def zero(cls, ring: Ring, h: int) -> "Lattice":
        return cls(ring, h, [])

    def __eq__(self, other):
        if not isinstance(other, Lattice):
            return NotImplemented
        return self.ring == other.ring and self.ambient_rank == other.ambient_rank and self.key == other.key

    def __hash__(self):
        return hash((self.ring.params, self.ambient_rank, self.key))

    def __repr__(self):
        return f"Lattice(rank={self.rank}/{self.ambient_rank}, divisors={list(self.divisors)}, ring={self.ring})"

    @property
    def key(self) -> tuple:
        return self.howell.key

    @property
    def rank(self) -> int:
        return len(self.basis)

    @property
    def is_free(self) -> bool:
        return all(v == 0 for v in self.divisors)

    def free_basis(self) -> List[Vector]:
        """Basis vectors generating a free direct summand (divisor 0)."""
        return [list(b) for b, v in zip(self.basis, self.divisors) if v == 0]

    def basis_matrix(self) -> Matrix:
        return from_columns([list(b) for b in self.basis], self.ambient_rank)

    def contains(self, v: Vector) -> bool:
        """Membership through the Howell form, exact at this precision."""
        return self.howell.contains(v)

    def coordinates(self, v: Vector) -> Vector:
        """
        y with Σ y_i·basis_i = v.

        Each y_i is determined modulo p^{N - divisor_i}; NotSolvable if v is not in the lattice.
        """
        w = mat_vec(self._left, list(v), self.ring)
        out = []
        for i, c in enumerate(w):
            if i < len(self.divisors):
                d = self.divisors[i]
                if c.valuation < d:
                    raise NotSolvable(f"coordinate {i} has valuation {c.valuation} < {d}")
                out.append(c.divexact_p(d))
            elif not c.is_zero():
                raise NotSolvable("vector leaves the span of the lattice")
        return out

    def issubset(self, other: "Lattice") -> bool:
        """Every basis vector of self lies in other."""
        return all(other.contains(list(b)) for b in self.basis)

    def length(self) -> int:
        """Length as a W_N-module."""
        return self.howell.length(self.ring.N)

    def colength(self) -> int:
        """length(R^h / self)."""
        return self.ring.N * self.ambient_rank - self.length()

    def __add__(self, other: "Lattice") -> "Lattice":
        return Lattice(self.ring, self.ambient_rank, [list(b) for b in self.basis] + [list(b) for b in other.basis])

    def is_stable(self, op: SemiLinOp) -> bool:
        """op(L) ⊆ L, tested on the basis."""
        return all(self.contains(apply(op, list(b))) for b in self.basis)

    def to_json(self) -> dict:
        return {
            "ambient_rank": self.ambient_rank,
            "basis": [[x.to_json() for x in row] for row in self.howell.rows],
        }


class FittingDecomposition(NamedTuple):
    bij: Lattice
    nil: Lattice
    steps: int


def fitting_decomposition(op: SemiLinOp) -> FittingDecomposition:
    """
    R^h = bij ⊕ nil with op bijective on bij and nilpotent on nil.

    bij is the stable image op^T(R^h), nil the stable kernel ker(op^T); ker(op^k) is
    σ^{-kt}(ker P_k) where P_k is the matrix of op^k.
    """
    ring, h = op.ring, op.rank
    if h == 0:
        empty = Lattice.zero(ring, 0)
        return FittingDecomposition(empty, empty, 0)
    t_max = h * ring.a * ring.N + 1
    prev_image = Lattice.full(ring, h)
    prev_kernel = Lattice.zero(ring, h)
    power = SemiLinOp.identity(ring, h)
    for k in range(1, t_max + 1):
        power = compose(op, power)
        image = Lattice(ring, h, [column(power.rows, j) for j in range(h)])
        ker_gens = kernel(power.rows, ring, h)
        ker = Lattice(ring, h, [frob_vector(v, -power.twist) for v in ker_gens])
        if image == prev_image and ker == prev_kernel:
            logger.debug(f"Fitting decomposition stabilised after {k - 1} steps: ranks {image.rank} + {ker.rank}")
            return FittingDecomposition(image, ker, k - 1)
        prev_image, prev_kernel = image, ker
    raise NoStabilization(f"image/kernel chains did not stabilise within {t_max} steps")


@dataclass(frozen=True, eq=False)
class FixedLattice:
    """Fixed vectors of an operator as a module over W_N(F_{p^g})"""
    ring: Ring
    scalars: Ring
    embedding: SubfieldEmbedding
    ambient_rank: int
    basis: tuple
    torsion: tuple = field(default=())

    @property
    def rank(self) -> int:
        return len(self.basis)

    def extend_scalars(self) -> Lattice:
        """W_N(F_{p^a}) ⊗ L as a lattice in R^h."""
        return Lattice(self.ring, self.ambient_rank, [list(b) for b in self.basis])

    def spans_module(self) -> bool:
        return self.rank == self.ambient_rank and self.extend_scalars() == Lattice.full(self.ring, self.ambient_rank)

    def basis_matrix(self) -> Matrix:
        return from_columns([list(b) for b in self.basis], self.ambient_rank)


def fixed_points(op: SemiLinOp) -> FixedLattice:
    """
    {x : op(x) = x}, as a module over W_N(F_{p^g}) with g = gcd(a, twist).

    The Z/p^N-kernel of linearize(op) - 1 is regrouped into a W_N(F_{p^g})-basis: a kernel
    vector is kept when its residue is independent of the residues of y^i·b for the
    vectors b already kept (y the generator of the subring).
    """
    ring, h = op.ring, op.rank
    a = ring.a
    g = math.gcd(a, op.twist % a)
    scalars = make_ring(ring.p, g, ring.N)
    embedding = subfield_embedding(scalars, ring)
    if h == 0:
        return FixedLattice(ring, scalars, embedding, 0, ())
    prime = prime_ring(ring)
    lin = linearize(op)
    system = mat_sub(lin, identity(prime, h * a))
    free = kernel(system, prime, h * a, free_only=True)
    all_gens = kernel(system, prime, h * a)
    torsion = tuple(tuple(unflatten(ring, v)) for v in all_gens if v not in free)
    if torsion:
        logger.warning(f"fixed points of {op} contain {len(torsion)} torsion generators")
    multipliers = embedding.powers
    chosen: List[Vector] = []
    spanning: List[Vector] = []
    target = len(free)
    for w in free:
        if len(chosen) * g >= target:
            break
        v = unflatten(ring, w)
        trial = spanning + [flatten([y * x for x in v]) for y in multipliers]
        if rank_mod_p(from_columns(trial, h * a)) == len(trial):
            chosen.append(v)
            spanning = trial
    if len(chosen) * g != target:
        logger.warning(f"fixed module of Z/p^N-rank {target} regrouped into {len(chosen)} vectors over {scalars}")
    return FixedLattice(ring, scalars, embedding, h, tuple(tuple(v) for v in chosen), torsion)


# overlattices of R^h

def _residue_lines(ring: Ring, h: int):
    """Normalised residue vectors (first non-zero coordinate 1), lifted coordinatewise."""
    residues = [ring.element(list(c)) for c in ring.residue_field_elements()]
    one = ring.one

    def rec(prefix, pos, started):
        if pos == h:
            if started:
                yield list(prefix)
            return
        if started:
            for c in residues:
                prefix.append(c)
                yield from rec(prefix, pos + 1, True)
                prefix.pop()
        else:
            prefix.append(ring.zero)
            yield from rec(prefix, pos + 1, False)
            prefix.pop()
            prefix.append(one)
            yield from rec(prefix, pos + 1, True)
            prefix.pop()

    return list(rec([], 0, False))


def minimal_extensions(lattice: Lattice, lines: Optional[list] = None) -> List[Lattice]:
    """All S + R·(u/p) for residue lines u of S/pS; S must lie in pR^h."""
    ring, h = lattice.ring, lattice.ambient_rank
    if lines is None:
        lines = _residue_lines(ring, h)
    basis = [list(b) for b in lattice.basis]
    if len(basis) != h:
        raise InvalidParams(f"lattice of rank {len(basis)} in rank {h} has no residue space of dimension {h}")
    out = []
    for coeffs in lines:
        u = [ring.zero] * h
        for c, b in zip(coeffs, basis):
            if not c.is_zero():
                u = [x + c * y for x, y in zip(u, b)]
        z = [x.divexact_p(1) for x in u]
        out.append(Lattice(ring, h, basis + [z]))
    return out


def enumerate_overlattices(ring: Ring, h: int, length: int, parallel: Optional[int] = None) -> List[Lattice]:
    """
    Lattices L with M ⊆ L ⊆ p^{-d}M and length(L/M) = d, for M = R^h.

    Each is returned scaled, as p^d·L inside R^h; grown one residue line at a time and
    deduplicated by Howell form. Needs N >= d + 1.
    """
    d = length
    if d < 0:
        raise InvalidParams("negative length")
    if d and ring.N < d + 1:
        raise InvalidParams(f"precision {ring.N} too small for overlattices of length {d}")
    cap = get_candidate_cap()
    pd = ring.p_power(d)
    level = {}
    start = Lattice(ring, h, [column(scalar_matrix(pd, h), j) for j in range(h)])
    level[start.key] = start
    lines = _residue_lines(ring, h)
    workers = resolve_workers(parallel)
    for step in range(d):
        nxt = {}
        current = [level[k] for k in sorted(level)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                futures = {executor.submit(minimal_extensions, lat, lines): lat for lat in current}
                for future in as_completed(futures):
                    for ext in future.result():
                        nxt.setdefault(ext.key, ext)
        else:
            for lat in current:
                for ext in minimal_extensions(lat, lines):
                    nxt.setdefault(ext.key, ext)
        if len(nxt) > cap:
            raise BudgetExceeded(f"{len(nxt)} overlattices at length {step + 1} exceed the cap {cap}")
        logger.debug(f"overlattices of length {step + 1}: {len(nxt)}")
        level = nxt
    return [level[k] for k in sorted(level)]
