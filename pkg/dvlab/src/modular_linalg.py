#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Matrices over the local rings W_N(F_{p^a}).

Matrices are lists of rows of RingElem; vectors are lists of RingElem. Every non-zero
element is a unit times a power of p, so elimination pivots on the entry of least
valuation and divides exactly by p^v.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import List, NamedTuple, Optional, Sequence

from loguru import logger

from config import ENUMERATION_CONFIG
from errors import DimensionMismatch, InvalidParams, NonUnit, NotSolvable, RingMismatch
from padic_base import INF, Ring, RingElem, elem_from_json, make_ring

Matrix = List[List[RingElem]]
Vector = List[RingElem]


# basic constructors

def zeros(ring: Ring, rows: int, cols: int) -> Matrix:
    return [[ring.zero] * cols for _ in range(rows)]


def identity(ring: Ring, n: int) -> Matrix:
    return [[ring.one if i == j else ring.zero for j in range(n)] for i in range(n)]


def scalar_matrix(c: RingElem, n: int) -> Matrix:
    zero = c.ring.zero
    return [[c if i == j else zero for j in range(n)] for i in range(n)]


def from_ints(ring: Ring, rows: Sequence[Sequence[int]]) -> Matrix:
    return [[ring.from_int(int(x)) for x in row] for row in rows]


def shape(A: Matrix, cols: Optional[int] = None) -> tuple:
    if not A:
        return 0, cols or 0
    return len(A), len(A[0])


def copy_matrix(A: Matrix) -> Matrix:
    return [list(row) for row in A]


def column(A: Matrix, j: int) -> Vector:
    return [row[j] for row in A]


def from_columns(cols: Sequence[Vector], nrows: int) -> Matrix:
    return [[c[i] for c in cols] for i in range(nrows)]


def transpose(A: Matrix, ncols: Optional[int] = None) -> Matrix:
    """Transpose; ncols gives the shape of an empty matrix."""
    if not A:
        return [[] for _ in range(ncols or 0)]
    return [list(row) for row in zip(*A)]


# arithmetic

def mat_mul(A: Matrix, B: Matrix) -> Matrix:
    """Product A·B; zero entries are skipped."""
    if not A:
        return []
    inner = len(A[0])
    if inner != len(B):
        raise DimensionMismatch(f"cannot multiply {len(A)}x{inner} by {len(B)}x?")
    if inner == 0:
        return [[] for _ in A]
    ring = A[0][0].ring
    zero = ring.zero
    n_cols = len(B[0])
    out = []
    for row in A:
        new_row = []
        for j in range(n_cols):
            acc = zero
            for k, x in enumerate(row):
                if x.coeffs != zero.coeffs:
                    y = B[k][j]
                    if y.coeffs != zero.coeffs:
                        acc = acc + x * y
            new_row.append(acc)
        out.append(new_row)
    return out


def mat_vec(A: Matrix, v: Vector, ring: Ring = None) -> Vector:
    """A·v. An empty v needs the ring to build the zero vector of length len(A)."""
    if A and len(A[0]) != len(v):
        raise DimensionMismatch(f"matrix has {len(A[0])} columns, vector has length {len(v)}")
    if not v:
        if A and ring is None:
            raise InvalidParams("a ring is needed to multiply by an empty vector")
        return [ring.zero for _ in A]
    zero = v[0].ring.zero
    out = []
    for row in A:
        acc = zero
        for x, y in zip(row, v):
            if not x.is_zero():
                acc = acc + x * y
        out.append(acc)
    return out


def mat_sub(A: Matrix, B: Matrix) -> Matrix:
    if shape(A) != shape(B):
        raise DimensionMismatch(f"{shape(A)} vs {shape(B)}")
    return [[x - y for x, y in zip(ra, rb)] for ra, rb in zip(A, B)]


def frob_matrix(A: Matrix, t: int) -> Matrix:
    """Apply σ^t entrywise."""
    return [[x.frobenius(t) for x in row] for row in A]


def frob_vector(v: Vector, t: int) -> Vector:
    return [x.frobenius(t) for x in v]


def block_diag(*blocks: Matrix, ring: Ring = None) -> Matrix:
    """Blocks on the diagonal; pass the ring when every block may be empty."""
    sizes = [len(b) for b in blocks]
    n = sum(sizes)
    if ring is None:
        for b in blocks:
            if b:
                ring = b[0][0].ring
                break
    if ring is None:
        return []
    out = zeros(ring, n, n)
    offset = 0
    for b, size in zip(blocks, sizes):
        for i in range(size):
            for j in range(size):
                out[offset + i][offset + j] = b[i][j]
        offset += size
    return out


def mat_equal(A: Matrix, B: Matrix) -> bool:
    return shape(A) == shape(B) and all(
        x.coeffs == y.coeffs for ra, rb in zip(A, B) for x, y in zip(ra, rb)
    )


def matrix_valuation(A: Matrix):
    """Content of A: least valuation of an entry (INF for the zero matrix)."""
    best = INF
    for row in A:
        for x in row:
            v = x.valuation
            if v < best:
                best = v
    return best


def change_ring(A: Matrix, ring: Ring) -> Matrix:
    """Reinterpret integer coordinates in a ring of another precision."""
    return [[x.truncate(ring) for x in row] for row in A]


def matrix_to_json(A: Matrix) -> list:
    return [[x.to_json() for x in row] for row in A]


def matrix_from_json(ring: Ring, data) -> Matrix:
    return [[elem_from_json(ring, x) for x in row] for row in data]


# inversion

def inverse(A: Matrix) -> Matrix:
    """Gauss-Jordan inverse; raises NonUnit when the reduction mod p is singular."""
    n = len(A)
    if n == 0:
        return []
    if any(len(row) != n for row in A):
        raise DimensionMismatch("inverse of a non-square matrix")
    ring = A[0][0].ring
    M = copy_matrix(A)
    inv = identity(ring, n)
    for k in range(n):
        pivot = next((i for i in range(k, n) if M[i][k].valuation == 0), None)
        if pivot is None:
            raise NonUnit(f"matrix is singular modulo p (column {k})")
        M[k], M[pivot] = M[pivot], M[k]
        inv[k], inv[pivot] = inv[pivot], inv[k]
        u = M[k][k].inverse()
        M[k] = [u * x for x in M[k]]
        inv[k] = [u * x for x in inv[k]]
        for i in range(n):
            if i != k and not M[i][k].is_zero():
                c = M[i][k]
                M[i] = [x - c * y for x, y in zip(M[i], M[k])]
                inv[i] = [x - c * y for x, y in zip(inv[i], inv[k])]
    return inv


def is_invertible(A: Matrix) -> bool:
    try:
        inverse(A)
    except NonUnit:
        return False
    return True


# Smith normal form

class SmithForm(NamedTuple):
    diag: list
    left: Matrix
    right: Matrix


def smith_normal_form(m: Matrix, ring: Ring = None, cols: Optional[int] = None) -> SmithForm:
    """
    Smith normal form over W_N(F_{p^a}).

    left·m·right = diag(p^{v_1}, p^{v_2}, ...) with v_1 <= v_2 <= ... and INF for zero
    entries. Pivot: entry of least valuation in the trailing block, ties broken in
    row-major order.
    """
    n, c = shape(m, cols)
    if ring is None:
        if n == 0 or c == 0:
            raise InvalidParams("ring must be given for an empty matrix")
        ring = m[0][0].ring
    D = copy_matrix(m) if n and c else [[ring.zero] * c for _ in range(n)]
    L = identity(ring, n)
    R = identity(ring, c)
    diag = []
    for k in range(min(n, c)):
        best_v, best_pos = INF, None
        for i in range(k, n):
            row = D[i]
            for j in range(k, c):
                v = row[j].valuation
                if v < best_v:
                    best_v, best_pos = v, (i, j)
                    if v == 0:
                        break
            if best_v == 0:
                break
        if best_pos is None:
            diag.extend([INF] * (min(n, c) - k))
            break
        i, j = best_pos
        if i != k:
            D[k], D[i] = D[i], D[k]
            L[k], L[i] = L[i], L[k]
        if j != k:
            for row in D:
                row[k], row[j] = row[j], row[k]
            for row in R:
                row[k], row[j] = row[j], row[k]
        v = best_v
        u_inv = D[k][k].divexact_p(v).inverse()
        D[k] = [u_inv * x for x in D[k]]
        L[k] = [u_inv * x for x in L[k]]
        for i in range(k + 1, n):
            if not D[i][k].is_zero():
                f = D[i][k].divexact_p(v)
                D[i] = [x - f * y for x, y in zip(D[i], D[k])]
                L[i] = [x - f * y for x, y in zip(L[i], L[k])]
        for j in range(k + 1, c):
            if not D[k][j].is_zero():
                f = D[k][j].divexact_p(v)
                for row in D:
                    row[j] = row[j] - f * row[k]
                for row in R:
                    row[j] = row[j] - f * row[k]
        diag.append(v)
    return SmithForm(diag, L, R)


def elementary_divisors(m: Matrix, ring: Ring = None, cols: Optional[int] = None) -> list:
    """Valuations of the Smith diagonal (INF for vanishing entries)."""
    return smith_normal_form(m, ring, cols).diag


def rank_mod_p(m: Matrix) -> int:
    """Rank over the residue field."""
    if not m or not m[0]:
        return 0
    return sum(1 for v in smith_normal_form(m).diag if v == 0)


def kernel(m: Matrix, ring: Ring, cols: Optional[int] = None, free_only: bool = False) -> List[Vector]:
    """
    Generators of {x : m·x = 0}.

    With free_only, only the generators coming from zero elementary divisors (and from
    missing rows) are returned: these span the largest free direct summand of the kernel.
    """
    n, c = shape(m, cols)
    if c == 0:
        return []
    snf = smith_normal_form(m, ring, c)
    R = snf.right
    gens = []
    for j in range(c):
        v = snf.diag[j] if j < len(snf.diag) else INF
        col = column(R, j)
        if v == INF:
            gens.append(col)
        elif v > 0 and not free_only:
            pk = ring.p_power(ring.N - v)
            gens.append([pk * x for x in col])
    return gens


def solve(A: Matrix, b: Vector, ring: Ring = None, cols: Optional[int] = None) -> Vector:
    """One solution x of A·x = b; NotSolvable if none exists."""
    n, c = shape(A, cols)
    if ring is None:
        ring = b[0].ring if b else A[0][0].ring
    if len(b) != n:
        raise DimensionMismatch(f"right-hand side has length {len(b)}, expected {n}")
    snf = smith_normal_form(A, ring, c)
    rhs = mat_vec(snf.left, b) if n else []
    y = [ring.zero] * c
    for i, ci in enumerate(rhs):
        v = snf.diag[i] if i < len(snf.diag) else INF
        if v == INF:
            if not ci.is_zero():
                raise NotSolvable("right-hand side outside the column space")
            continue
        if ci.valuation < v:
            raise NotSolvable("right-hand side outside the column space")
        y[i] = ci.divexact_p(v)
    return mat_vec(snf.right, y) if c else []


# Howell form: canonical generators of a submodule of R^h

@dataclass(frozen=True)
class HowellForm:
    """Echelon rows with pivots p^{v_j} at increasing columns; entries above reduced mod p^{v_j}."""
    ambient_rank: int
    rows: tuple
    pivots: tuple = field(default=())  # (column, valuation)

    @property
    def key(self) -> tuple:
        return tuple(tuple(x.coeffs for x in row) for row in self.rows)

    def length(self, N: int) -> int:
        return sum(N - v for _, v in self.pivots)

    def reduce(self, x: Vector) -> Vector:
        """Remainder of x after division by the rows; zero iff x lies in the span."""
        x = list(x)
        for (col, v), row in zip(self.pivots, self.rows):
            c = x[col]
            if c.is_zero():
                continue
            if c.valuation < v:
                return x
            f = c.divexact_p(v)
            x = [xi - f * ri for xi, ri in zip(x, row)]
        return x

    def contains(self, x: Vector) -> bool:
        return all(c.is_zero() for c in self.reduce(x))


def _normalize_mod(c: RingElem, v: int) -> RingElem:
    """Quotient q with c - q·p^v having all coordinates in [0, p^v)."""
    pv = c.ring.p ** v
    return RingElem(c.ring, tuple(x // pv for x in c.coeffs))


def howell_form(ring: Ring, vectors: Sequence[Vector], ambient_rank: int) -> HowellForm:
    """
    Canonical row echelon form of the span of the vectors.

    Pivot entries are powers of p and entries above a pivot are reduced modulo it. For a
    pivot of valuation v > 0 the row p^{N-v}·pivot is fed back, so two spans are equal
    exactly when their forms agree.
    """
    rows = [list(v) for v in vectors if any(not x.is_zero() for x in v)]
    for r in rows:
        if len(r) != ambient_rank:
            raise DimensionMismatch(f"vector of length {len(r)} in rank {ambient_rank}")
    out_rows, pivots = [], []
    N = ring.N
    for col in range(ambient_rank):
        if not rows:
            break
        best_i, best_v = None, INF
        for i, r in enumerate(rows):
            v = r[col].valuation
            if v < best_v:
                best_i, best_v = i, v
                if v == 0:
                    break
        if best_i is None:
            continue
        piv = rows.pop(best_i)
        u_inv = piv[col].divexact_p(best_v).inverse()
        piv = [u_inv * x for x in piv]
        reduced = []
        for r in rows:
            if not r[col].is_zero():
                f = r[col].divexact_p(best_v)
                r = [x - f * y for x, y in zip(r, piv)]
            if any(not x.is_zero() for x in r):
                reduced.append(r)
        if best_v > 0:
            pk = ring.p_power(N - best_v)
            extra = [pk * x for x in piv]
            if any(not x.is_zero() for x in extra):
                reduced.append(extra)
        rows = reduced
        out_rows.append(piv)
        pivots.append((col, best_v))
    for j, (col_j, v_j) in enumerate(pivots):
        for i in range(j):
            q = _normalize_mod(out_rows[i][col_j], v_j)
            if not q.is_zero():
                out_rows[i] = [x - q * y for x, y in zip(out_rows[i], out_rows[j])]
    return HowellForm(ambient_rank, tuple(tuple(r) for r in out_rows), tuple(pivots))


# subfield embeddings W_N(F_{p^g}) -> W_N(F_{p^a})

def prime_ring(ring: Ring) -> Ring:
    """Z/p^N, the subring of W_N(F_{p^a}) with a = 1."""
    return make_ring(ring.p, 1, ring.N)


def coordinates(x: RingElem, prime: Ring) -> Vector:
    """Coefficients of x in the power basis, as elements of the prime ring."""
    return [prime.from_int(c) for c in x.coeffs]


class SubfieldEmbedding:
    """The σ-equivariant embedding of W_N(F_{p^g}) into W_N(F_{p^a}) for g | a."""

    def __init__(self, small: Ring, big: Ring):
        if small.p != big.p or small.N != big.N:
            raise RingMismatch(f"{small} does not embed in {big}")
        if big.a % small.a:
            raise InvalidParams(f"F_{small.p}^{small.a} is not a subfield of F_{big.p}^{big.a}")
        self.small = small
        self.big = big
        self.g = small.a
        self.root = self._find_root()
        powers = [big.one]
        for _ in range(1, self.g):
            powers.append(powers[-1] * self.root)
        self.powers = powers
        self._prime = prime_ring(big)
        # columns: coordinates of root^i in the power basis of the big ring
        self._matrix = from_columns([coordinates(y, self._prime) for y in powers], big.a)
        self._snf = smith_normal_form(self._matrix, self._prime, self.g)
        if any(v != 0 for v in self._snf.diag):
            raise InvalidParams("subfield basis is not a direct summand")

    def _find_root(self) -> RingElem:
        big, g = self.big, self.g
        f = self.small.modulus
        if g == 1:
            return big.from_int(-f[0])
        if g == big.a:
            return big.gen
        residue = big.truncate(1)
        # σ^g-fixed residues form a g-dimensional F_p-subspace
        fix = mat_sub(
            from_columns([coordinates(residue.frobenius(residue.element(e), g), prime_ring(residue))
                          for e in _unit_vectors(big.a)], big.a),
            identity(prime_ring(residue), big.a),
        )
        basis = kernel(fix, prime_ring(residue), big.a, free_only=True)
        if len(basis) != g:
            raise InvalidParams(f"fixed field of σ^{g} has dimension {len(basis)}")
        if big.p ** g > ENUMERATION_CONFIG['root_search_cap']:
            raise InvalidParams(f"residue root search over {big.p}^{g} elements exceeds the cap")
        root = None
        for combo in product(range(big.p), repeat=g):
            coords = [sum(c * b[i].coeffs[0] for c, b in zip(combo, basis)) % big.p for i in range(big.a)]
            candidate = residue.element(coords)
            if residue.evaluate(f, candidate).is_zero():
                root = big.element(coords)
                break
        if root is None:
            raise InvalidParams(f"no root of {f} in the residue field of {big}")
        derivative = [i * f[i] for i in range(1, len(f))]
        for _ in range(2 * big.N.bit_length() + 4):
            fy = big.evaluate(f, root)
            if fy.is_zero():
                break
            root = root - fy * big.evaluate(derivative, root).inverse()
        logger.debug(f"Embedding {self.small} -> {big}: generator ↦ {root.coeffs}")
        return root

    def embed(self, x: RingElem) -> RingElem:
        if x.ring != self.small:
            raise RingMismatch(f"{x.ring} is not {self.small}")
        acc = self.big.zero
        for c, y in zip(x.coeffs, self.powers):
            if c:
                acc = acc + c * y
        return acc

    def restrict(self, x: RingElem) -> RingElem:
        """Inverse of embed on its image; NotSolvable outside the subring."""
        rhs = mat_vec(self._snf.left, coordinates(x, self._prime))
        if any(not c.is_zero() for c in rhs[self.g:]):
            raise NotSolvable(f"{x} is not in the image of {self.small}")
        coords = mat_vec(self._snf.right, rhs[: self.g])
        return self.small.element([c.coeffs[0] for c in coords])

    def embed_matrix(self, A: Matrix) -> Matrix:
        return [[self.embed(x) for x in row] for row in A]

    def restrict_matrix(self, A: Matrix) -> Matrix:
        return [[self.restrict(x) for x in row] for row in A]


def _unit_vectors(a: int):
    for i in range(a):
        yield [1 if j == i else 0 for j in range(a)]


_EMBEDDINGS = {}


def subfield_embedding(small: Ring, big: Ring) -> SubfieldEmbedding:
    """Cached SubfieldEmbedding(small, big)."""
    key = (small.params, big.params)
    if key not in _EMBEDDINGS:
        _EMBEDDINGS[key] = SubfieldEmbedding(small, big)
    return _EMBEDDINGS[key]
