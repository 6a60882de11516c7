#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Slope structures: Φ-étale splitting, slope filtrations, complete slope divisibility,
isoclinic splitting, saturation to a completely slope divisible module, descent to a
finite field and the enumeration of isogenies to completely slope divisible targets.

Throughout, Φ = p^{-r}·V^s (twist -s). Φ commutes with F and V, so its Fitting parts and
its stable overlattices are Dieudonné submodules and overmodules.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence

from loguru import logger

from config import get_candidate_cap, resolve_workers
from dieudonne import (
    DModule,
    IsogenyData,
    base_change,
    compose_isogenies,
    identity_isogeny,
    isogeny_from_lattice,
    quotient_module,
    sublattice_module,
    truncate,
)
from errors import (
    BudgetExceeded,
    DescentFailed,
    InsufficientPrecision,
    InvalidParams,
    NoStabilization,
    NotCSD,
    NotIntegral,
    NotIsoclinic,
    NotSolvable,
    NotStable,
    PrecisionExhausted,
)
from modular_linalg import (
    Matrix,
    change_ring,
    column,
    frob_matrix,
    from_columns,
    identity,
    inverse,
    mat_mul,
    matrix_to_json,
    smith_normal_form,
    solve,
)
from newton import NewtonPolygon, is_isoclinic, newton_polygon
from padic_base import INF
from semilinear import Lattice, SemiLinOp, compose, divide_by_p, enumerate_overlattices, fitting_decomposition, fixed_points


@dataclass(frozen=True)
class SlopeData:
    """s ≥ r_1 > r_2 > … > r_m ≥ 0"""
    s: int
    r: tuple

    def __post_init__(self):
        r = tuple(int(x) for x in self.r)
        object.__setattr__(self, "r", r)
        if self.s < 1 or not r:
            raise InvalidParams(f"slope data needs s >= 1 and at least one r, got s={self.s}, r={list(r)}")
        if r[0] > self.s or r[-1] < 0 or any(x <= y for x, y in zip(r, r[1:])):
            raise InvalidParams(f"need s >= r_1 > ... > r_m >= 0, got s={self.s}, r={list(r)}")

    @classmethod
    def from_polygon(cls, polygon: NewtonPolygon) -> "SlopeData":
        """s = lcm of the slope denominators, r_i = λ_i·s in decreasing order."""
        slopes = sorted(polygon.slopes, reverse=True)
        if not slopes:
            raise InvalidParams("empty Newton polygon has no slope data")
        s = 1
        for lam in slopes:
            s = s * lam.denominator // math.gcd(s, lam.denominator)
        return cls(s, tuple(int(lam * s) for lam in slopes))

    @property
    def slopes(self) -> List[Fraction]:
        return [Fraction(x, self.s) for x in self.r]

    def scaled(self, t: int) -> "SlopeData":
        return SlopeData(self.s * t, tuple(x * t for x in self.r))

    def to_json(self) -> dict:
        return {"s": self.s, "r": list(self.r)}


def _frac(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


# Φ and its Fitting parts

def phi_operator(A: DModule, r: int, s: int) -> SemiLinOp:
    """p^{-r}V^s over precision N - r; NotIntegral if V^s(M) ⊄ p^r·M."""
    if s < 1 or r < 0:
        raise InvalidParams(f"need s >= 1 and r >= 0, got s={s}, r={r}")
    return divide_by_p(A.V.power(s), r)


@dataclass(frozen=True)
class PhiEtaleSplit:
    """M = nil ⊕ étale for Φ; bases are written in the coordinates of the input module."""
    nil_part: DModule
    etale_part: DModule
    nil_basis: tuple
    etale_basis: tuple

    def __iter__(self):
        return iter((self.nil_part, self.etale_part))

    @property
    def nil_matrix(self) -> Matrix:
        return [list(r) for r in self.nil_basis]

    @property
    def etale_matrix(self) -> Matrix:
        return [list(r) for r in self.etale_basis]


def phi_etale_split(A: DModule, r: int, s: int) -> PhiEtaleSplit:
    phi = phi_operator(A, r, s)
    base = truncate(A, phi.ring.N)
    parts = fitting_decomposition(phi)
    nil, nil_B = sublattice_module(base, parts.nil.basis)
    etale, etale_B = sublattice_module(base, parts.bij.basis)
    logger.debug(f"Φ = p^-{r}·V^{s}: nil rank {nil.rank}, étale rank {etale.rank}")
    return PhiEtaleSplit(nil, etale, tuple(tuple(x) for x in nil_B), tuple(tuple(x) for x in etale_B))


def phi_etale_part_mod_p(A: DModule, r: int, s: int) -> Lattice:
    """
    Φ-étale part of the p-torsion M/pM: the stable image of Φ mod p.

    Its dimension over the residue field is the height of the Φ-étale part of M.
    """
    phi = phi_operator(A, r, s)
    residue = phi.ring.truncate(1)
    parts = fitting_decomposition(phi.truncate(residue))
    logger.debug(f"Φ-étale part of M/pM has dimension {parts.bij.rank}")
    return parts.bij


# saturation under Φ

def _scaled_generators(ring, powers: Sequence[Matrix], r: int, E: int) -> List[list]:
    """Columns of p^{E - r·u}·V^{s·u} for u < len(powers), over `ring`."""
    gens = []
    for u, Q in enumerate(powers):
        k = r * u - E
        if k <= 0:
            pk = ring.p_power(-k)
            scaled = [[pk * x.truncate(ring) for x in row] for row in Q]
        else:
            scaled = [[x.divexact_p(k).truncate(ring) for x in row] for row in Q]
        gens.extend(column(scaled, j) for j in range(len(Q)))
    return gens


def phi_saturation(A: DModule, r: int, s: int) -> IsogenyData:
    """
    Isogeny onto the smallest Φ-stable overlattice L = Σ_t Φ^t(M).

    With Q_t the matrix of V^{st} and c_t its content, Φ^t(M) ⊆ p^{-e_t}M for
    e_t = max(0, r·t - c_t); the chain is tested on the scaled lattices p^E·L_t.
    """
    ring, h = A.ring, A.rank
    Vs = A.V.power(s)
    if h == 0 or Vs.content() >= r:
        return identity_isogeny(A)
    t_max = h * ring.N + 1
    powers = [identity(ring, h)]
    power = SemiLinOp.identity(ring, h)
    E = 0
    for t in range(1, t_max + 1):
        power = compose(Vs, power)
        c = power.content()
        if c == INF:
            raise PrecisionExhausted(f"V^{s * t} vanishes modulo p^{ring.N}")
        powers.append(power.rows)
        E = max(E, r * t - c)
        loss = max(max(r * u - E, 0) for u in range(t + 1))
        precision = ring.N - loss
        if precision < E + 1:
            raise PrecisionExhausted(f"saturation needs denominator p^{E} but only {precision} digits remain")
        target_ring = ring.truncate(precision)
        prev = Lattice(target_ring, h, _scaled_generators(target_ring, powers[:-1], r, E))
        new = _scaled_generators(target_ring, powers[-1:], r, E - r * t)  # p^{E - rt}·Q_t
        if all(prev.contains(g) for g in new):
            logger.debug(f"Φ-saturation stable after {t - 1} steps with denominator p^{E}")
            # p^E·L is exact modulo p^E together with p^E·M, so L is formed in A itself
            gens = change_ring([list(b) for b in prev.basis], ring)
            return isogeny_from_lattice(A, gens, E)
    raise NoStabilization(f"Φ-saturation did not stabilise within {t_max} steps")


# filtrations

@dataclass(frozen=True)
class Filtration:
    """0 = Y_0 ⊂ Y_1 ⊂ … ⊂ Y_m = M with slopes λ_1 > … > λ_m"""
    module: DModule
    steps: tuple
    slopes: tuple

    def graded_pieces(self) -> List[DModule]:
        pieces = []
        base = truncate(self.module, self.steps[-1].ring.N)
        for lower, upper in zip(self.steps, self.steps[1:]):
            if upper.rank == 0:
                pieces.append(DModule.from_matrices(base.ring, [], []))
                continue
            sub, B = sublattice_module(base, upper.basis)
            inner = [solve(B, list(b), base.ring, sub.rank) for b in lower.basis]
            pieces.append(quotient_module(sub, inner))
        return pieces

    def to_json(self) -> dict:
        return {
            "slopes": [_frac(x) for x in self.slopes],
            "steps": [[[x.to_json() for x in row] for row in step.howell.rows] for step in self.steps],
        }


def _steps_at(steps: Sequence[Lattice], N: int) -> tuple:
    out = []
    for step in steps:
        ring = step.ring.truncate(N)
        out.append(Lattice(ring, step.ambient_rank, [[x.truncate(ring) for x in b] for b in step.basis]))
    return tuple(out)


def slope_filtration(A: DModule) -> Filtration:
    """
    The slope filtration of A, built top-down: Y_{i-1} is the saturation in Y_i of the
    Φ_i-nilpotent part of the Φ_i-saturation of Y_i, Φ_i = p^{-r_i}V^s.
    """
    polygon = newton_polygon(A)
    h = A.rank
    if h == 0:
        return Filtration(A, (Lattice.zero(A.ring, 0),), ())
    sd = SlopeData.from_polygon(polygon)
    slopes = tuple(sd.slopes)
    mults = dict(polygon.points)
    m = len(slopes)
    current = A
    basis = identity(A.ring, h)
    steps = [Lattice.full(A.ring, h)]
    for i in range(m - 1, 0, -1):
        r = sd.r[i]
        iso = phi_saturation(current, r, sd.s)
        split = phi_etale_split(iso.target, r, sd.s)
        ring = split.nil_part.ring
        expected = sum(mults[lam] for lam in slopes[:i])
        G = mat_mul(change_ring(iso.B, ring), split.nil_matrix)
        snf = smith_normal_form(G, ring, split.nil_part.rank)
        finite = [v for v in snf.diag if v != INF]
        if len(finite) != expected:
            raise InsufficientPrecision(f"slope part of rank {len(finite)} found, expected {expected}")
        precision = ring.N - max(finite, default=0)
        if precision < 1:
            raise InsufficientPrecision("no precision left to saturate the filtration step")
        ring = ring.truncate(precision)
        left_inv = change_ring(inverse(snf.left), ring)
        sat = [column(left_inv, j) for j in range(expected)]
        current, _ = sublattice_module(truncate(current, precision), sat)
        basis = mat_mul(change_ring(basis, ring), from_columns(sat, len(sat[0])))
        steps.append(Lattice(ring, h, [column(basis, j) for j in range(expected)]))
    steps.append(Lattice.zero(current.ring, h))
    final_N = min(step.ring.N for step in steps)
    filtration = Filtration(truncate(A, final_N), _steps_at(list(reversed(steps)), final_N), slopes)
    logger.info(f"slope filtration with slopes {[_frac(x) for x in slopes]} at precision {final_N}")
    return filtration


@dataclass(frozen=True)
class CSDResult:
    csd: bool
    filtration: Optional[Filtration] = None
    failure: Optional[str] = None

    def __bool__(self):
        return self.csd

    def to_dict(self) -> dict:
        out = {"csd": self.csd}
        if self.filtration is not None:
            out["filtration"] = self.filtration.to_json()
        if self.failure:
            out["failure"] = self.failure
        return out


def is_completely_slope_divisible(A: DModule, sd: SlopeData) -> CSDResult:
    """
    Build the filtration greedily from the top: Y_{i-1} is the Φ_i-nilpotent part of Y_i
    and Y_i/Y_{i-1} its Φ_i-étale part, where Φ_i = p^{-r_i}V^s must be integral on Y_i.

    Every graded piece of a nonzero module must be nonzero, so a slope datum with an r_i
    that is not s times a slope of A is rejected.
    """
    h = A.rank
    current = A
    basis = identity(A.ring, h)
    steps = [Lattice.full(A.ring, h)]
    for i in range(len(sd.r) - 1, -1, -1):
        r = sd.r[i]
        if current.rank == 0:
            if h:
                return CSDResult(False, failure=f"graded piece Y_{i + 1}/Y_{i} is zero")
            steps.append(Lattice.zero(current.ring, h))
            continue
        try:
            split = phi_etale_split(current, r, sd.s)
        except NotIntegral:
            return CSDResult(False, failure=f"p^-{r}·V^{sd.s} is not integral on Y_{i + 1}")
        except PrecisionExhausted as exc:
            raise InsufficientPrecision(exc.detail) from exc
        if split.etale_part.rank == 0:
            return CSDResult(False, failure=f"graded piece Y_{i + 1}/Y_{i} is zero")
        ring = split.nil_part.ring
        basis = mat_mul(change_ring(basis, ring), split.nil_matrix)
        current = split.nil_part
        steps.append(Lattice(ring, h, [column(basis, j) for j in range(current.rank)]))
    if current.rank:
        return CSDResult(False, failure=f"Φ-nilpotent remainder of rank {current.rank} below Y_1")
    final_N = min(step.ring.N for step in steps)
    filtration = Filtration(truncate(A, final_N), _steps_at(list(reversed(steps)), final_N), tuple(sd.slopes))
    return CSDResult(True, filtration)


@dataclass(frozen=True)
class IsoclinicSplit:
    """Isoclinic parts (slopes decreasing) and the basis matrix W with W^{-1}·A·W = ⊕ parts."""
    parts: tuple
    witness: tuple

    def __iter__(self):
        return iter(self.parts)

    def __len__(self):
        return len(self.parts)

    def __getitem__(self, i):
        return self.parts[i]


def split_isoclinic(A: DModule, sd: Optional[SlopeData] = None) -> IsoclinicSplit:
    if sd is None:
        sd = SlopeData.from_polygon(newton_polygon(A))
    if not is_completely_slope_divisible(A, sd):
        raise NotCSD(f"module is not completely slope divisible for s={sd.s}, r={list(sd.r)}")
    h = A.rank
    if h == 0:
        return IsoclinicSplit((), ())
    current = A
    basis = identity(A.ring, h)
    found = []
    for r in reversed(sd.r):
        if current.rank == 0:
            break
        split = phi_etale_split(current, r, sd.s)
        ring = split.nil_part.ring
        basis = change_ring(basis, ring)
        if split.etale_part.rank:
            found.append((split.etale_part, mat_mul(basis, split.etale_matrix)))
        basis = mat_mul(basis, split.nil_matrix) if split.nil_part.rank else []
        current = split.nil_part
    N = min(part.ring.N for part, _ in found)
    parts = [truncate(part, N) for part, _ in reversed(found)]
    cols = []
    for _, B in reversed(found):
        B = change_ring(B, parts[0].ring)
        cols.extend(column(B, j) for j in range(len(B[0])))
    W = from_columns(cols, h)
    return IsoclinicSplit(tuple(parts), tuple(tuple(r) for r in W))


# saturation to a completely slope divisible module

def _saturate(A: DModule, s: int, rs: Sequence[int]) -> IsogenyData:
    """
    Φ-saturate for the smallest r, split, and recurse on the nilpotent part.

    On the last slope the Φ-saturation is already étale: the polygon has been matched
    against the slope data, so Φ is integral with unit determinant there.
    """
    if A.rank == 0:
        return identity_isogeny(A)
    r = rs[-1]
    to_stable = phi_saturation(A, r, s)
    if len(rs) == 1:
        return to_stable
    L = to_stable.target
    split = phi_etale_split(L, r, s)
    if split.nil_part.rank == 0:
        return to_stable
    inner = _saturate(split.nil_part, s, rs[:-1])
    ring = split.nil_part.ring
    e = inner.denominator
    if ring.N < e:
        raise PrecisionExhausted(f"nilpotent part known modulo p^{ring.N} cannot carry the denominator p^{e}")
    pe = ring.p_power(e)
    nil_gens = mat_mul(split.nil_matrix, change_ring(inner.B, ring))
    gens = [column(nil_gens, j) for j in range(len(nil_gens[0]))]
    gens += [[pe * x for x in column(split.etale_matrix, j)] for j in range(split.etale_part.rank)]
    # generators are exact modulo p^e, so the overlattice is taken in L at its own precision
    step = isogeny_from_lattice(L, change_ring(gens, L.ring), e)
    return compose_isogenies(to_stable, step)


def csd_saturate(A: DModule, sd: Optional[SlopeData] = None) -> IsogenyData:
    """
    Isogeny A -> Y onto the smallest completely slope divisible overlattice.

    Y = Y' ⊕ L^Φ where L is the Φ_m-saturation of M and Y' is obtained recursively from
    the Φ_m-nilpotent part of L. Lattices are always formed inside the full-precision
    module of the current level, so only the actual denominators cost precision.
    """
    polygon = newton_polygon(A)
    if sd is None:
        sd = SlopeData.from_polygon(polygon)
    elif sorted(sd.slopes) != sorted(polygon.slopes):
        raise InvalidParams(
            f"slope data {sd.to_json()} does not match the polygon slopes {[_frac(x) for x in polygon.slopes]}"
        )
    if is_completely_slope_divisible(A, sd):
        return identity_isogeny(A)
    iso = _saturate(A, sd.s, sd.r)
    if iso.log_degree >= A.ring.N:
        raise PrecisionExhausted(f"accumulated log-degree {iso.log_degree} >= N = {A.ring.N}")
    # re-transport from A when the lattice is known well enough
    if iso.target.ring.N > iso.denominator:
        h = A.rank
        B = change_ring(iso.B, A.ring)
        iso = isogeny_from_lattice(A, [column(B, j) for j in range(h)], iso.denominator)
    logger.info(f"csd saturation of log-degree {iso.log_degree}")
    return iso


# descent to a finite field

@dataclass(frozen=True)
class DescentResult:
    """model over W_N(F_{p^g}) and witness B with B^{-1}·F·σ(B) = base_change(model)"""
    model: DModule
    witness: tuple
    module: DModule

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "witness": matrix_to_json([list(r) for r in self.witness]),
            "field_degree": self.module.ring.a,
        }


def _descend(A: DModule, sd: SlopeData) -> Optional[DescentResult]:
    r = sd.r[0]
    phi = phi_operator(A, r, sd.s)
    base = truncate(A, phi.ring.N)
    fixed = fixed_points(phi)
    if fixed.rank != A.rank or not fixed.spans_module():
        logger.warning(f"fixed lattice of rank {fixed.rank} over {fixed.scalars} does not span")
        return None
    B = fixed.basis_matrix()
    B_inv = inverse(B)
    emb = fixed.embedding
    try:
        MF = emb.restrict_matrix(mat_mul(mat_mul(B_inv, base.MF), frob_matrix(B, 1)))
        MV = emb.restrict_matrix(mat_mul(mat_mul(B_inv, base.MV), frob_matrix(B, -1)))
    except NotSolvable as exc:
        raise DescentFailed(f"F, V do not preserve the fixed lattice: {exc.detail}") from exc
    model = DModule.from_matrices(fixed.scalars, MF, MV)
    return DescentResult(model, tuple(tuple(row) for row in B), base)


def descend_finite_field(A: DModule, sd: SlopeData) -> DescentResult:
    """Model over F_{p^g}, g = gcd(a, s), from the Φ-fixed lattice; base-changes to lcm(a, s) if needed."""
    if len(sd.r) != 1:
        raise InvalidParams("descent needs slope data with a single r")
    if not is_completely_slope_divisible(A, sd):
        raise NotCSD(f"module is not completely slope divisible for s={sd.s}, r={list(sd.r)}")
    result = _descend(A, sd)
    if result is not None:
        return result
    a = A.ring.a
    wider = a * sd.s // math.gcd(a, sd.s)
    if wider != a:
        logger.warning(f"descent over F_p^{math.gcd(a, sd.s)} failed; base-changing to F_p^{wider}")
        result = _descend(base_change(A, wider), sd)
        if result is not None:
            return result
    raise DescentFailed("Φ-fixed lattice has deficient rank")


# isogenies to completely slope divisible targets

def _check_isoclinic_csd(A: DModule, sd: SlopeData):
    if is_isoclinic(A) is None:
        raise NotIsoclinic("module has more than one slope")
    if len(sd.r) != 1:
        raise InvalidParams("isoclinic enumeration needs slope data with a single r")
    if not is_completely_slope_divisible(A, sd):
        raise NotCSD(f"module is not completely slope divisible for s={sd.s}, r={list(sd.r)}")


def phi_stable_overlattices(A: DModule, log_d: int, sd: SlopeData, parallel: Optional[int] = None) -> List[Lattice]:
    """
    Scaled lattices p^d·L for the Φ-stable L ⊇ M with length(L/M) = d.

    Enumerated as overmodules of the Φ-fixed lattice over W_N(F_{p^g}) and extended to
    W_N(F_{p^a}); falls back to filtering all overlattices when the fixed lattice does not
    span.
    """
    _check_isoclinic_csd(A, sd)
    r, s, d = sd.r[0], sd.s, log_d
    phi = phi_operator(A, r, s)
    ring, h = phi.ring, A.rank
    if ring.N < d + 1:
        raise PrecisionExhausted(f"precision {ring.N} after dividing by p^{r} is too small for log-degree {d}")
    fixed = fixed_points(phi)
    if fixed.rank == h and fixed.spans_module():
        B = fixed.basis_matrix()
        emb = fixed.embedding
        small = enumerate_overlattices(fixed.scalars, h, d, parallel)
        out = {}
        for S in small:
            gens = []
            for b in S.basis:
                image = [emb.embed(x) for x in b]
                gens.append([sum((B[i][j] * image[j] for j in range(h)), ring.zero) for i in range(h)])
            L = Lattice(ring, h, gens)
            out.setdefault(L.key, L)
        lattices = [out[k] for k in sorted(out)]
    else:
        logger.warning("Φ-fixed lattice does not span; filtering overlattices of the full ring")
        lattices = [S for S in enumerate_overlattices(ring, h, d, parallel) if S.is_stable(phi)]
    logger.debug(f"{len(lattices)} Φ-stable overlattices of length {d}")
    return lattices


def _lattice_isogeny(A: DModule, S: Lattice, d: int) -> Optional[IsogenyData]:
    try:
        return isogeny_from_lattice(A, [list(b) for b in S.basis], d)
    except NotStable:
        return None


def enumerate_csd_isogenies(A: DModule, log_d: int, sd: SlopeData, parallel: Optional[int] = None) -> List[IsogenyData]:
    """All isogenies A -> Z of log-degree log_d with Z completely slope divisible for sd."""
    candidates = phi_stable_overlattices(A, log_d, sd, parallel)
    cap = get_candidate_cap()
    if len(candidates) > cap:
        raise BudgetExceeded(f"{len(candidates)} candidates exceed the cap {cap}")
    base = truncate(A, candidates[0].ring.N) if candidates else A
    workers = resolve_workers(parallel)
    found = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(_lattice_isogeny, base, S, log_d): S.key for S in candidates}
            for future in as_completed(futures):
                iso = future.result()
                if iso is not None:
                    found[futures[future]] = iso
    else:
        for S in candidates:
            iso = _lattice_isogeny(base, S, log_d)
            if iso is not None:
                found[S.key] = iso
    result = [found[k] for k in sorted(found)]
    logger.info(f"{len(result)} csd isogenies of log-degree {log_d} among {len(candidates)} Φ-stable lattices")
    return result
