#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Covariant Dieudonné modules over W_N(F_{p^a}).

A module is a free R-module of rank h with F (twist +1) and V (twist -1) such that
FV = VF = p. Isogenies are recorded as overlattices: the target lattice is
L = p^{-e}·span(lattice_map) inside the isocrystal of the source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product
from typing import List, Optional, Sequence, Tuple

from loguru import logger

from config import ENUMERATION_CONFIG, get_witness_cap
from errors import (
    DimensionMismatch,
    InsufficientPrecision,
    InvalidParams,
    InvariantViolation,
    NotAlphaP,
    NotAnExtension,
    NotSolvable,
    NotStable,
    PrecisionExhausted,
    RingMismatch,
)
from modular_linalg import (
    Matrix,
    Vector,
    block_diag,
    change_ring,
    column,
    frob_matrix,
    from_columns,
    howell_form,
    identity,
    inverse,
    kernel,
    mat_equal,
    mat_mul,
    mat_sub,
    matrix_from_json,
    matrix_to_json,
    prime_ring,
    rank_mod_p,
    scalar_matrix,
    smith_normal_form,
    subfield_embedding,
    transpose,
    zeros,
)
from padic_base import INF, Ring, make_ring, ring_from_dict
from semilinear import Lattice, SemiLinOp, apply, compose, flatten, linearize, unflatten


@dataclass(frozen=True, eq=False)
class DModule:
    """Covariant Dieudonné module; construction checks FV = VF = p exactly."""
    ring: Ring
    F: SemiLinOp
    V: SemiLinOp

    def __post_init__(self):
        if self.F.ring != self.ring or self.V.ring != self.ring:
            raise RingMismatch(f"operators over {self.F.ring}/{self.V.ring}, module over {self.ring}")
        if self.F.rank != self.V.rank:
            raise DimensionMismatch(f"F has rank {self.F.rank}, V has rank {self.V.rank}")
        a = self.ring.a
        if self.F.twist % a != 1 % a or self.V.twist % a != -1 % a:
            raise InvariantViolation(f"twists ({self.F.twist}, {self.V.twist}) must be (+1, -1)")
        p_id = scalar_matrix(self.ring.from_int(self.ring.p), self.rank)
        if self.rank and not mat_equal(compose(self.F, self.V).rows, p_id):
            raise InvariantViolation("FV != p")
        if self.rank and not mat_equal(compose(self.V, self.F).rows, p_id):
            raise InvariantViolation("VF != p")

    @classmethod
    def from_matrices(cls, ring: Ring, MF: Matrix, MV: Matrix) -> "DModule":
        return cls(ring, SemiLinOp.from_matrix(ring, MF, 1), SemiLinOp.from_matrix(ring, MV, -1))

    @property
    def rank(self) -> int:
        return self.F.rank

    @property
    def MF(self) -> Matrix:
        return self.F.rows

    @property
    def MV(self) -> Matrix:
        return self.V.rows

    def __eq__(self, other):
        if not isinstance(other, DModule):
            return NotImplemented
        return self.ring == other.ring and self.F == other.F and self.V == other.V

    def __hash__(self):
        return hash((self.ring.params, self.F, self.V))

    def __repr__(self):
        return f"DModule(rank={self.rank}, ring={self.ring})"

    def to_dict(self) -> dict:
        return {
            "ring": self.ring.to_dict(),
            "rank": self.rank,
            "F": matrix_to_json(self.MF),
            "V": matrix_to_json(self.MV),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DModule":
        ring = ring_from_dict(data["ring"])
        MF = matrix_from_json(ring, data["F"])
        MV = matrix_from_json(ring, data["V"])
        if len(MF) != int(data.get("rank", len(MF))):
            raise DimensionMismatch(f"rank {data['rank']} but F has {len(MF)} rows")
        return cls.from_matrices(ring, MF, MV)


def zero_module(ring: Ring) -> DModule:
    """The module of rank 0 (the trivial p-divisible group)."""
    return DModule.from_matrices(ring, [], [])


def make_gmn(m: int, n: int, ring: Ring) -> DModule:
    """
    Module of G_{m,n}: F e_j = e_{j+1} for the first m edges and p·e_{j+1} for the last n
    (indices cyclic), V = p·F^{-1}. F^m e_1 = V^n e_1 and V^{m+n} = p^m.
    """
    if m < 0 or n < 0 or (m == 0 and n == 0) or math.gcd(m, n) != 1:
        raise InvalidParams(f"(m, n) = ({m}, {n}) must be coprime, non-negative and not both zero")
    h = m + n
    p = ring.p
    MF = zeros(ring, h, h)
    MV = zeros(ring, h, h)
    for j in range(h):
        c = 1 if j < m else p
        MF[(j + 1) % h][j] = ring.from_int(c)
        MV[j][(j + 1) % h] = ring.from_int(p // c)
    return DModule.from_matrices(ring, MF, MV)


def direct_sum(A: DModule, B: DModule) -> DModule:
    """Block-diagonal F and V; both summands must live over the same ring."""
    if A.ring != B.ring:
        raise RingMismatch(f"{A.ring} vs {B.ring}")
    return DModule.from_matrices(
        A.ring,
        block_diag(A.MF, B.MF, ring=A.ring),
        block_diag(A.MV, B.MV, ring=A.ring),
    )


def dual(A: DModule) -> DModule:
    """Module of the Serre dual: F and V swap roles under the transpose, so slopes λ become 1 - λ."""
    # ⟨Fx, y⟩ = σ⟨x, Vy⟩: F_dual = σ(V^T), V_dual = σ^{-1}(F^T)
    MF = frob_matrix(transpose(A.MV, A.rank), 1)
    MV = frob_matrix(transpose(A.MF, A.rank), -1)
    return DModule.from_matrices(A.ring, MF, MV)


def base_change(A: DModule, a_new: int) -> DModule:
    """
    Extension of scalars W_N(F_{p^a}) -> W_N(F_{p^a_new}) through the subfield embedding.

    The basis is kept, so F and V keep their matrices up to the embedding of coefficients.
    a_new must be a multiple of a.
    """
    ring = A.ring
    if a_new < 1 or a_new % ring.a:
        raise NotAnExtension(f"F_{ring.p}^{ring.a} is not contained in F_{ring.p}^{a_new}")
    if a_new == ring.a:
        return A
    big = make_ring(ring.p, a_new, ring.N)
    emb = subfield_embedding(ring, big)
    return DModule.from_matrices(big, emb.embed_matrix(A.MF), emb.embed_matrix(A.MV))


def truncate(A: DModule, N: int) -> DModule:
    """Reduce F and V modulo p^N (N may not exceed the current precision)."""
    if N == A.ring.N:
        return A
    if N > A.ring.N:
        raise InvalidParams(f"cannot raise precision from {A.ring.N} to {N}")
    ring = A.ring.truncate(N)
    return DModule(ring, A.F.truncate(ring), A.V.truncate(ring))


def conjugate(A: DModule, P: Matrix) -> DModule:
    """The same module in the basis given by the columns of the invertible matrix P."""
    P_inv = inverse(P)
    return DModule(A.ring, A.F.change_basis(P, P_inv), A.V.change_basis(P, P_inv))


def is_intertwiner(T: Matrix, A: DModule, B: DModule) -> bool:
    """T: M_A -> M_B commutes with F and V."""
    if not A.rank and not B.rank:
        return True
    return (
        mat_equal(mat_mul(T, A.MF), mat_mul(B.MF, frob_matrix(T, 1)))
        and mat_equal(mat_mul(T, A.MV), mat_mul(B.MV, frob_matrix(T, -1)))
    )


# α_p subgroups

def alpha_p_embeddings(A: DModule) -> List[Vector]:
    """
    Basis (canonical echelon form) of {x ∈ M/pM : Fx ≡ Vx ≡ 0}.

    ker F = σ^{-1}(ker MF) and ker V = σ(ker MV) over F_{p^a}; the intersection is read
    off the kernel of the stacked matrix [K_F | -K_V].
    """
    h = A.rank
    if h == 0:
        return []
    residue = A.ring.truncate(1)
    MF = change_ring(A.MF, residue)
    MV = change_ring(A.MV, residue)
    ker_f = [[x.frobenius(-1) for x in v] for v in kernel(MF, residue, h)]
    ker_v = [[x.frobenius(1) for x in v] for v in kernel(MV, residue, h)]
    if not ker_f or not ker_v:
        return []
    stacked = from_columns(ker_f + [[-x for x in v] for v in ker_v], h)
    combos = kernel(stacked, residue, len(ker_f) + len(ker_v))
    vectors = []
    for c in combos:
        x = [residue.zero] * h
        for coeff, v in zip(c[: len(ker_f)], ker_f):
            x = [xi + coeff * vi for xi, vi in zip(x, v)]
        vectors.append(x)
    form = howell_form(residue, vectors, h)
    return [list(r) for r in form.rows]


def a_number(A: DModule) -> int:
    """dim of ker F ∩ ker V on M/pM."""
    return len(alpha_p_embeddings(A))


def dimension(A: DModule) -> int:
    """length(M/VM), the dimension of the p-divisible group."""
    if A.rank == 0:
        return 0
    diag = smith_normal_form(A.MV, A.ring, A.rank).diag
    if any(v == INF for v in diag):
        raise InsufficientPrecision(f"V is not invertible on the isocrystal at {A.ring}")
    return sum(diag)


# isogenies

@dataclass(frozen=True, eq=False)
class IsogenyData:
    """
    Isogeny source -> target of degree p^{log_degree}.

    The target's basis is p^{-denominator}·(columns of lattice_map), written in the
    source's coordinates.
    """
    source: DModule
    target: DModule
    log_degree: int
    lattice_map: tuple
    denominator: int = 0

    @property
    def B(self) -> Matrix:
        return [list(r) for r in self.lattice_map]

    def target_lattice(self) -> Lattice:
        """p^{denominator}·L as a lattice of the source."""
        h = self.source.rank
        return Lattice(self.source.ring, h, [column(self.B, j) for j in range(h)])

    def to_dict(self) -> dict:
        return {
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
            "log_degree": self.log_degree,
            "lattice_map": matrix_to_json(self.B),
            "denominator": self.denominator,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IsogenyData":
        source = DModule.from_dict(data["source"])
        target = DModule.from_dict(data["target"])
        B = matrix_from_json(source.ring, data["lattice_map"])
        return cls(source, target, int(data["log_degree"]), tuple(tuple(r) for r in B), int(data.get("denominator", 0)))


def _transport(A: DModule, S: Lattice) -> Tuple[DModule, Matrix]:
    """F and V of A in the basis of S (S must be stable); precision drops by max divisor."""
    ring = A.ring
    loss = max(S.divisors, default=0)
    if ring.N - loss < 1:
        raise PrecisionExhausted(f"lattice divisors up to {loss} exhaust precision {ring.N}")
    target = ring.truncate(ring.N - loss)
    cols_F, cols_V = [], []
    try:
        for b in S.basis:
            cols_F.append(S.coordinates(apply(A.F, list(b))))
            cols_V.append(S.coordinates(apply(A.V, list(b))))
    except NotSolvable as exc:
        raise NotStable(f"lattice is not F,V-stable: {exc.detail}") from exc
    k = S.rank
    MF = change_ring(from_columns(cols_F, k), target)
    MV = change_ring(from_columns(cols_V, k), target)
    B = from_columns([list(b) for b in S.basis], A.rank)
    return DModule.from_matrices(target, MF, MV), B


def isogeny_from_lattice(A: DModule, gens: Sequence[Vector], e: int) -> IsogenyData:
    """
    Isogeny A -> A' onto the overlattice L = M + p^{-e}·span(gens).

    The target carries precision N - max_i v_i where p^{v_i} are the elementary divisors
    of p^e·L in M; log_degree = length(L/M) = h·e - Σ v_i.
    """
    ring, h = A.ring, A.rank
    if e < 0:
        raise InvalidParams(f"negative denominator {e}")
    if ring.N - e < 1:
        raise PrecisionExhausted(f"denominator p^{e} exhausts precision {ring.N}")
    pe = ring.p_power(e)
    std = [[pe if i == j else ring.zero for i in range(h)] for j in range(h)]
    S = Lattice(ring, h, list(gens) + std)
    if S.rank != h or any(v > e for v in S.divisors):
        raise InvalidParams(f"generators do not define an overlattice with denominator p^{e}")
    target, B = _transport(A, S)
    log_degree = h * e - sum(S.divisors)
    logger.debug(f"isogeny of log-degree {log_degree} onto lattice with divisors {list(S.divisors)}")
    return IsogenyData(A, target, log_degree, tuple(tuple(r) for r in B), e)


def sublattice_module(A: DModule, gens: Sequence[Vector]) -> Tuple[DModule, Matrix]:
    """The F,V-stable submodule spanned by gens, with its basis in A's coordinates."""
    S = Lattice(A.ring, A.rank, gens)
    return _transport(A, S)


def quotient_module(A: DModule, sub_gens: Sequence[Vector]) -> DModule:
    """M/Y for a saturated F,V-stable submodule Y."""
    ring, h = A.ring, A.rank
    Y = Lattice(ring, h, sub_gens)
    if not Y.is_free:
        raise InvalidParams(f"submodule is not saturated (divisors {list(Y.divisors)})")
    k = Y.rank
    P_inv = Y._left
    P = inverse(P_inv)
    conj = conjugate(A, P) if h else A
    MF, MV = conj.MF, conj.MV
    for i in range(k, h):
        for j in range(k):
            if not MF[i][j].is_zero() or not MV[i][j].is_zero():
                raise NotStable("submodule is not F,V-stable")
    return DModule.from_matrices(
        ring,
        [row[k:] for row in MF[k:]],
        [row[k:] for row in MV[k:]],
    )


def quotient_by_alpha_p(A: DModule, x: Vector) -> IsogenyData:
    """The degree-p isogeny onto M + R·p^{-1}x̃."""
    ring = A.ring
    if len(x) != A.rank:
        raise DimensionMismatch(f"vector of length {len(x)} in rank {A.rank}")
    lift = [ring.element(list(c.coeffs)) if c.ring != ring else c for c in x]
    if all(c.valuation >= 1 for c in lift):
        raise NotAlphaP("x vanishes modulo p")
    for name, op in (("F", A.F), ("V", A.V)):
        image = apply(op, lift)
        if any(c.valuation < 1 for c in image):
            raise NotAlphaP(f"{name}x is not divisible by p")
    iso = isogeny_from_lattice(A, [lift], 1)
    if iso.log_degree != 1:
        raise InvariantViolation(f"α_p quotient has log-degree {iso.log_degree}")
    return iso


def identity_isogeny(A: DModule) -> IsogenyData:
    """A -> A with lattice map the identity and log-degree 0."""
    return IsogenyData(A, A, 0, tuple(tuple(r) for r in identity(A.ring, A.rank)), 0)


def compose_isogenies(first: IsogenyData, second: IsogenyData) -> IsogenyData:
    """second ∘ first; lattice maps multiply, denominators and degrees add."""
    if first.target.rank != second.source.rank or first.target.ring.p != second.source.ring.p:
        raise DimensionMismatch("isogenies are not composable")
    ring = first.source.ring
    B2 = change_ring(second.B, ring)
    B = mat_mul(first.B, B2)
    return IsogenyData(
        first.source,
        second.target,
        first.log_degree + second.log_degree,
        tuple(tuple(r) for r in B),
        first.denominator + second.denominator,
    )


def direct_sum_isogenies(f: IsogenyData, g: IsogenyData) -> IsogenyData:
    """f ⊕ g, with both lattice maps brought to the larger denominator."""
    source = direct_sum(f.source, g.source)
    ring = source.ring
    e = max(f.denominator, g.denominator)
    Bf = [[ring.p_power(e - f.denominator) * x for x in row] for row in f.B]
    Bg = [[ring.p_power(e - g.denominator) * x for x in row] for row in g.B]
    N = min(f.target.ring.N, g.target.ring.N)
    target = direct_sum(truncate(f.target, N), truncate(g.target, N))
    B = block_diag(Bf, Bg, ring=ring)
    return IsogenyData(source, target, f.log_degree + g.log_degree, tuple(tuple(r) for r in B), e)


# isomorphism testing

@dataclass(frozen=True)
class IsomorphismResult:
    status: str  # Yes, No or Inconclusive
    witness: Optional[tuple] = None
    reason: str = ""

    def __bool__(self):
        return self.status == "Yes"

    def to_dict(self) -> dict:
        out = {"status": self.status, "reason": self.reason}
        if self.witness is not None:
            out["witness"] = matrix_to_json([list(r) for r in self.witness])
        return out


def _profiles(A: DModule) -> dict:
    prime = prime_ring(A.ring)
    n = A.rank * A.ring.a
    lin_f = linearize(A.F)
    lin_v = linearize(A.V)
    profiles = {}
    for name, m in (("F", lin_f), ("V", lin_v), ("F-V", mat_sub(lin_f, lin_v))):
        profiles[name] = tuple(smith_normal_form(m, prime, n).diag) if n else ()
    return profiles


def _intertwiner_system(A: DModule, B: DModule) -> Tuple[Matrix, int]:
    """Linear map T ↦ (T·F_A - F_B·σ(T), T·V_A - V_B·σ^{-1}(T)) over Z/p^N."""
    ring, h, a = A.ring, A.rank, A.ring.a
    prime = prime_ring(ring)
    unknowns = h * h * a
    cols = []
    for r in range(h):
        for c in range(h):
            for i in range(a):
                T = zeros(ring, h, h)
                T[r][c] = ring.gen ** i
                eq_f = mat_sub(mat_mul(T, A.MF), mat_mul(B.MF, frob_matrix(T, 1)))
                eq_v = mat_sub(mat_mul(T, A.MV), mat_mul(B.MV, frob_matrix(T, -1)))
                cols.append(flatten([x for row in eq_f for x in row] + [x for row in eq_v for x in row]))
    return from_columns(cols, 2 * h * h * a), unknowns


def _matrix_from_unknowns(ring: Ring, h: int, w: Vector) -> Matrix:
    flat = unflatten(ring, w)
    return [flat[r * h:(r + 1) * h] for r in range(h)]


def is_isomorphic(A: DModule, B: DModule) -> IsomorphismResult:
    """
    Decide A ≅ B where possible.

    No when an invariant differs (rank, elementary divisors of F, V, F-V, Newton polygon);
    otherwise search the F_p-combinations of a kernel basis of the intertwining system for
    a matrix invertible modulo p.
    """
    from newton import newton_polygon

    if A.ring.p != B.ring.p or A.ring.a != B.ring.a:
        raise RingMismatch(f"{A.ring} vs {B.ring}")
    N = min(A.ring.N, B.ring.N)
    A, B = truncate(A, N), truncate(B, N)
    ring, h = A.ring, A.rank
    if A.rank != B.rank:
        return IsomorphismResult("No", reason="rank")
    if h == 0:
        return IsomorphismResult("Yes", witness=())
    pa, pb = _profiles(A), _profiles(B)
    for name in ("F", "V", "F-V"):
        if pa[name] != pb[name]:
            return IsomorphismResult("No", reason=f"elementary_divisors_{name}")
    try:
        if newton_polygon(A) != newton_polygon(B):
            return IsomorphismResult("No", reason="newton_polygon")
    except InsufficientPrecision:
        logger.debug("Newton polygons unavailable at this precision; skipping that invariant")
    if A == B:
        return IsomorphismResult("Yes", witness=tuple(tuple(r) for r in identity(ring, h)))
    if ring.a > ENUMERATION_CONFIG['witness_max_field_degree'] or h > ENUMERATION_CONFIG['witness_max_rank']:
        logger.warning(f"witness search skipped for rank {h} over {ring}")
        return IsomorphismResult("Inconclusive", reason="search_out_of_range")

    system, unknowns = _intertwiner_system(A, B)
    prime = prime_ring(ring)
    gens = kernel(system, prime, unknowns, free_only=True)
    residue = prime.truncate(1)
    chosen: List[Vector] = []
    for g in gens:
        trial = chosen + [g]
        if rank_mod_p(from_columns([[x.truncate(residue) for x in v] for v in trial], unknowns)) == len(trial):
            chosen.append(g)
    k = len(chosen)
    cap = get_witness_cap()
    p = ring.p
    tried = 0
    exhaustive = (p ** k - 1) <= cap
    for weight in range(1, k + 1):
        for support in combinations(range(k), weight):
            for values in product(range(1, p), repeat=weight):
                tried += 1
                if tried > cap:
                    logger.warning(f"witness search stopped after {cap} combinations")
                    return IsomorphismResult("Inconclusive", reason="witness_cap")
                w = [prime.zero] * unknowns
                for idx, c in zip(support, values):
                    w = [x + c * y for x, y in zip(w, chosen[idx])]
                T = _matrix_from_unknowns(ring, h, w)
                if rank_mod_p(change_ring(T, ring.truncate(1))) == h:
                    if not is_intertwiner(T, A, B):
                        raise InvariantViolation("kernel element is not an intertwiner")
                    return IsomorphismResult("Yes", witness=tuple(tuple(r) for r in T))
    if exhaustive:
        return IsomorphismResult("No", reason="no_invertible_intertwiner")
    return IsomorphismResult("Inconclusive", reason="witness_cap")


def module_from_dict(data: dict) -> DModule:
    """
    Accepts a module, an isogeny (its target), a descent result (its model) or a family
    fiber report (its fiber), so that every verb that prints a module can feed another.
    """
    if "target" in data and "lattice_map" in data:
        return DModule.from_dict(data["target"])
    if "model" in data:
        return DModule.from_dict(data["model"])
    if "module" in data:
        return DModule.from_dict(data["module"])
    if "fiber" in data:
        return DModule.from_dict(data["fiber"])
    return DModule.from_dict(data)
