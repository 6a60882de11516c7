#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Two families of p-divisible groups, realized fiber by fiber.

* A one-parameter family over k[t]: X_t = (G_{1,1} ⊕ G_{1,2}) / α_p, where α_p is embedded
  by (id, t). Every fiber has the same Newton polygon, but the map from G_{1,1} into X_t has
  a kernel exactly at t = 0. So the family has no slope filtration.
* A group over a nodal curve: the fibers at 0 and ∞ of (G_{2,1} ⊕ G_{1,2}) / α_p(-1),
  glued along G/α_p ≅ G (via Ver on the first factor and Fr on the second). Every isogeny
  of the glued fiber to a completely slope divisible target changes degree by a factor p
  between the two charts.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

from loguru import logger

from config import get_candidate_cap, resolve_workers
from dieudonne import (
    DModule,
    IsogenyData,
    alpha_p_embeddings,
    compose_isogenies,
    direct_sum,
    direct_sum_isogenies,
    identity_isogeny,
    is_intertwiner,
    make_gmn,
    quotient_by_alpha_p,
    truncate,
)
from errors import BudgetExceeded, InvalidParams, InvariantViolation
from modular_linalg import (
    Matrix,
    block_diag,
    column,
    elementary_divisors,
    from_columns,
    inverse,
    mat_mul,
    matrix_to_json,
    rank_mod_p,
)
from newton import NewtonPolygon, is_constant_polygon, newton_polygon
from padic_base import INF, Ring, make_ring
from slope import SlopeData, enumerate_csd_isogenies, phi_etale_part_mod_p, phi_etale_split, phi_saturation

Residue = Union[int, Sequence[int]]


def _alpha_p_generator(A: DModule) -> list:
    """Lift of the unique α_p generator of A."""
    gens = alpha_p_embeddings(A)
    if len(gens) != 1:
        raise InvariantViolation(f"expected a unique α_p subgroup, found {len(gens)}")
    return [A.ring.element(list(x.coeffs)) for x in gens[0]]


# the family over k[t]

@dataclass(frozen=True)
class ParamFamily:
    """Fibers X_t over t ∈ F_{p^a}, all at precision N"""
    base_ring: Ring
    N: int
    z1: DModule = field(repr=False)
    z2: DModule = field(repr=False)
    x1: tuple = field(repr=False)
    x2: tuple = field(repr=False)

    @classmethod
    def build(cls, p: int, N: int, a: int = 1) -> "ParamFamily":
        if N < 3:
            raise InvalidParams(f"the family needs N >= 3, got {N}")
        ring = make_ring(p, a, N + 1)
        z1 = make_gmn(1, 1, ring)
        z2 = make_gmn(1, 2, ring)
        return cls(ring, N, z1, z2, tuple(_alpha_p_generator(z1)), tuple(_alpha_p_generator(z2)))

    @property
    def product(self) -> DModule:
        return direct_sum(self.z1, self.z2)

    def parameters(self) -> List[tuple]:
        return list(self.base_ring.residue_field_elements())

    def isogeny(self, t: Residue) -> IsogenyData:
        """Z -> X_t, the quotient by α_p embedded as (id, t)."""
        ring = self.base_ring
        lift = ring.teichmuller(t)
        x = list(self.x1) + [lift * c for c in self.x2]
        return quotient_by_alpha_p(self.product, x)

    def fiber(self, t: Residue) -> DModule:
        return self.isogeny(t).target

    def map_parameters(self, fn: Callable[[tuple], object], parallel: Optional[int] = None) -> Dict[tuple, object]:
        params = self.parameters()
        workers = resolve_workers(parallel)
        if workers <= 1:
            return {t: fn(t) for t in params}
        out = {}
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(fn, t): t for t in params}
            for future in as_completed(futures):
                out[futures[future]] = future.result()
        return {t: out[t] for t in params}

    def fibers(self, parallel: Optional[int] = None) -> Dict[tuple, DModule]:
        return self.map_parameters(self.fiber, parallel)

    def phi_etale_data(self, t: Residue, sd: SlopeData) -> "FiberEtaleData":
        """
        Φ = p^{-r_m}V^s for the smallest slope, read off the Φ-saturation of X_t (which is
        X_t itself exactly when Φ is integral there).
        """
        r, s = sd.r[-1], sd.s
        iso = phi_saturation(self.fiber(t), r, s)
        split = phi_etale_split(iso.target, r, s)
        residue = phi_etale_part_mod_p(iso.target, r, s)
        key = tuple(t) if isinstance(t, (tuple, list)) else (t,)
        return FiberEtaleData(key, iso.log_degree == 0, iso.log_degree, split.etale_part.rank, residue.rank)

    def xi_kernel_order(self, t: Residue) -> int:
        """
        length((M_t ∩ Q·M(Z_1)) / M(Z_1)).

        M_t ⊆ p^{-1}M(Z), so this is the residue dimension of (p·M_t mod p) ∩ (Z_1-block).
        """
        iso = self.isogeny(t)
        h1, h = self.z1.rank, iso.source.rank
        B = iso.B
        gens = [column(B, j) for j in range(h)]
        ring = iso.source.ring
        block = [[ring.one if i == j else ring.zero for i in range(h)] for j in range(h1)]
        dim_u = rank_mod_p(from_columns(gens, h))
        dim_sum = rank_mod_p(from_columns(gens + block, h))
        return dim_u + h1 - dim_sum


def example41_isogeny(p: int, t: Residue, N: int, a: int = 1) -> IsogenyData:
    return ParamFamily.build(p, N, a).isogeny(t)


def example41_fiber(p: int, t: Residue, N: int, a: int = 1) -> DModule:
    """M(G_{1,1} ⊕ G_{1,2}) + W·p^{-1}(x_1 + [t]·x_2) at precision N."""
    return example41_isogeny(p, t, N, a).target


def xi_kernel_order(p: int, t: Residue, N: int, a: int = 1) -> int:
    return ParamFamily.build(p, N, a).xi_kernel_order(t)


@dataclass(frozen=True)
class SweepResult:
    p: int
    a: int
    N: int
    polygon: NewtonPolygon
    constant: bool
    kernel_orders: tuple  # ((t, order), ...)

    @property
    def jump(self) -> int:
        orders = dict(self.kernel_orders)
        zero = orders[tuple([0] * self.a)]
        others = [v for t, v in orders.items() if any(t)]
        return zero - max(others, default=0)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "a": self.a,
            "N": self.N,
            "polygon": self.polygon.to_json(),
            "constant_polygon": self.constant,
            "xi_kernel_order": [{"t": list(t), "order": v} for t, v in self.kernel_orders],
            "jump": self.jump,
        }


def example41_sweep(p: int, N: int, a: int = 1, parallel: Optional[int] = None) -> SweepResult:
    family = ParamFamily.build(p, N, a)
    fibers = family.fibers(parallel)
    constancy = is_constant_polygon(list(fibers.values()), parallel)
    polygon = newton_polygon(next(iter(fibers.values())))
    orders = tuple((t, family.xi_kernel_order(t)) for t in family.parameters())
    logger.info(f"family over F_{p}^{a}: constant polygon {bool(constancy)}, kernel orders {[v for _, v in orders]}")
    return SweepResult(p, a, N, polygon, bool(constancy), orders)


# Φ-étale parts along the family

@dataclass(frozen=True)
class FiberEtaleData:
    t: tuple
    integral: bool  # Φ is an endomorphism of X_t itself
    saturation_degree: int
    height: int
    residue_dimension: int  # dimension of the Φ-étale part of X_t(1) after saturation

    def to_dict(self) -> dict:
        return {
            "t": list(self.t),
            "integral": self.integral,
            "saturation_log_degree": self.saturation_degree,
            "height": self.height,
            "residue_dimension": self.residue_dimension,
        }


@dataclass(frozen=True)
class EtaleSweepResult:
    p: int
    a: int
    N: int
    slope_data: SlopeData
    fibers: tuple

    @property
    def constant(self) -> bool:
        """Same Φ-étale height on every fiber, matched by the p-torsion."""
        return len({(f.height, f.residue_dimension) for f in self.fibers}) == 1 and all(
            f.height == f.residue_dimension for f in self.fibers)

    @property
    def integral_everywhere(self) -> bool:
        return all(f.integral for f in self.fibers)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "a": self.a,
            "N": self.N,
            "slope_data": self.slope_data.to_json(),
            "fibers": [f.to_dict() for f in self.fibers],
            "constant_height": self.constant,
            "integral_everywhere": self.integral_everywhere,
        }


def example41_etale_sweep(p: int, N: int, a: int = 1, parallel: Optional[int] = None) -> EtaleSweepResult:
    """
    Φ-étale heights of all fibers for Φ = p^{-r_m}V^s of the common polygon.

    The height is constant along the family, but Φ is an isogeny of the fiber only at t = 0.
    """
    family = ParamFamily.build(p, N, a)
    sd = SlopeData.from_polygon(newton_polygon(family.fiber(family.parameters()[0])))
    data = family.map_parameters(lambda t: family.phi_etale_data(t, sd), parallel)
    result = EtaleSweepResult(p, a, N, sd, tuple(data[t] for t in family.parameters()))
    logger.info(f"Φ-étale heights {[f.height for f in result.fibers]}, integral on {sum(f.integral for f in result.fibers)} fibers")
    return result


# the glued group over the nodal curve

def _isomorphism(source: DModule, target: DModule, T: Matrix) -> IsogenyData:
    """The isomorphism source -> target with matrix T, as an isogeny of log-degree 0."""
    if not is_intertwiner(T, source, target):
        raise InvariantViolation("matrix does not intertwine F and V")
    ring = source.ring
    B = [[x.truncate(ring) for x in row] for row in inverse(T)]
    return IsogenyData(source, target, 0, tuple(tuple(r) for r in B), 0)


def _quotient_identification(iso: IsogenyData, op: str) -> Matrix:
    """
    Matrix of the isomorphism G/α_p -> G induced by F (op = "F") or V (op = "V").

    The quotient's basis is p^{-1}·B in the coordinates of G, and F(p^{-1}b) = p^{-1}·MF·b
    because the base field is F_p.
    """
    G, L = iso.source, iso.target
    M = G.MF if op == "F" else G.MV
    image = mat_mul(M, iso.B)
    D = [[x.divexact_p(iso.denominator).truncate(L.ring) for x in row] for row in image]
    if any(v != 0 for v in elementary_divisors(D, L.ring)):
        raise InvariantViolation(f"{op} does not identify G/α_p with G")
    return D


@dataclass(frozen=True, eq=False)
class GluedGroup:
    """
    Fibers at 0 and ∞ of X = Z/α_p(-1) over P^1 and the gluing datum γ: X_0 ≅ X_∞.

    fiber0 = G_{2,1} ⊕ G_{1,2}/α_p, fiber_inf = G_{2,1}/α_p ⊕ G_{1,2}; the gluing matrix
    is block diagonal, so the factor lists stay aligned.
    """
    source: DModule
    source_factors: tuple
    factors0: tuple
    factors_inf: tuple
    psi0: tuple  # per factor, Z_i -> (X_0)_i
    psi_inf: tuple  # per factor, Z_i -> (X_∞)_i
    gluing_blocks: tuple
    fiber0: DModule = field(init=False)
    fiber_inf: DModule = field(init=False)
    gluing: tuple = field(init=False)

    def __post_init__(self):
        fiber0 = direct_sum(*self.factors0)
        fiber_inf = direct_sum(*self.factors_inf)
        gluing = block_diag(*[[list(r) for r in g] for g in self.gluing_blocks], ring=fiber0.ring)
        if not is_intertwiner(gluing, fiber0, fiber_inf):
            raise InvariantViolation("gluing does not intertwine the fibers at 0 and ∞")
        object.__setattr__(self, "fiber0", fiber0)
        object.__setattr__(self, "fiber_inf", fiber_inf)
        object.__setattr__(self, "gluing", tuple(tuple(r) for r in gluing))

    def chart_isogeny(self, chart: str) -> IsogenyData:
        """Z -> X_0 or Z -> X_∞ as a single isogeny."""
        parts = self.psi0 if chart == "0" else self.psi_inf
        return direct_sum_isogenies(*parts)

    def gluing_block(self, i: int) -> IsogenyData:
        """γ restricted to factor i, as an isomorphism (X_0)_i -> (X_∞)_i."""
        return _isomorphism(self.factors0[i], self.factors_inf[i], [list(r) for r in self.gluing_blocks[i]])

    def to_dict(self) -> dict:
        return {
            "fiber0": self.fiber0.to_dict(),
            "fiber_inf": self.fiber_inf.to_dict(),
            "gluing": matrix_to_json([list(r) for r in self.gluing]),
            "factor_ranks": [A.rank for A in self.factors0],
        }


def build_example42(p: int, N: int) -> GluedGroup:
    if N < 4:
        raise InvalidParams(f"the glued group needs N >= 4, got {N}")
    ring = make_ring(p, 1, N + 1)
    z1 = make_gmn(2, 1, ring)
    z2 = make_gmn(1, 2, ring)
    q1 = quotient_by_alpha_p(z1, _alpha_p_generator(z1))
    q2 = quotient_by_alpha_p(z2, _alpha_p_generator(z2))
    # G_{2,1}/α_p ≅ G_{2,1} through Ver (F on modules), G_{1,2}/α_p ≅ G_{1,2} through Fr (V)
    d1 = _quotient_identification(q1, "F")
    d2 = _quotient_identification(q2, "V")
    g1 = truncate(z1, N)
    g2 = truncate(z2, N)
    glued = GluedGroup(
        source=truncate(direct_sum(z1, z2), N),
        source_factors=(z1, z2),
        factors0=(g1, q2.target),
        factors_inf=(q1.target, g2),
        psi0=(identity_isogeny(z1), q2),
        psi_inf=(q1, identity_isogeny(z2)),
        gluing_blocks=(tuple(tuple(r) for r in inverse(d1)), tuple(tuple(r) for r in d2)),
    )
    logger.info(f"glued group over the nodal curve built at p={p}, N={N}")
    return glued


# verification of the degree mismatch

def _lattice_log_degree(iso: IsogenyData) -> int:
    """h·e - Σ v_i from the lattice map alone."""
    h = iso.source.rank
    divisors = elementary_divisors(iso.B, iso.source.ring, h)
    if any(v == INF for v in divisors):
        raise InvariantViolation("composite lattice map is singular at this precision")
    return h * iso.denominator - sum(divisors)


def _chain(*isogenies: IsogenyData) -> IsogenyData:
    out = isogenies[0]
    for nxt in isogenies[1:]:
        out = compose_isogenies(out, nxt)
    if _lattice_log_degree(out) != out.log_degree:
        raise InvariantViolation("degrees of the composite do not add up")
    return out


def _factor_slope_data(A: DModule) -> SlopeData:
    return SlopeData.from_polygon(newton_polygon(A))


@dataclass(frozen=True)
class CandidateReport:
    degrees: tuple  # (log_d of φ', log_d of φ'')
    beta1: tuple  # (deg at 0, deg at ∞)
    beta2: tuple

    def to_dict(self) -> dict:
        return {"phi": list(self.degrees), "beta1": list(self.beta1), "beta2": list(self.beta2)}


def _evaluate(glued: GluedGroup, phi1: IsogenyData, phi2: IsogenyData) -> CandidateReport:
    """
    Degrees of β_i: Z_i -> Y_i read through both charts.

    At 0 the middle fiber is X_0 itself; at ∞ it is reached through γ^{-1}, so
    (β_i)_∞ = φ_i ∘ γ_i^{-1} ∘ (ψ_∞)_i.
    """
    back = [_isomorphism(glued.factors_inf[i], glued.factors0[i],
                         inverse([list(r) for r in glued.gluing_blocks[i]])) for i in range(2)]
    b1_0 = _chain(glued.psi0[0], phi1)
    b1_inf = _chain(glued.psi_inf[0], back[0], phi1)
    b2_0 = _chain(glued.psi0[1], phi2)
    b2_inf = _chain(glued.psi_inf[1], back[1], phi2)
    return CandidateReport(
        (phi1.log_degree, phi2.log_degree),
        (b1_0.log_degree, b1_inf.log_degree),
        (b2_0.log_degree, b2_inf.log_degree),
    )


@dataclass(frozen=True)
class VerificationReport:
    log_d_max: int
    levels: tuple  # ((d, (CandidateReport, ...)), ...)

    @property
    def mismatches(self) -> List[int]:
        return sorted({c.beta1[1] - c.beta1[0] for _, cands in self.levels for c in cands})

    @property
    def second_mismatches(self) -> List[int]:
        return sorted({c.beta2[1] - c.beta2[0] for _, cands in self.levels for c in cands})

    @property
    def no_glued_isogeny(self) -> bool:
        """No candidate has equal degree in both charts on either factor."""
        return all(
            c.beta1[0] != c.beta1[1] and c.beta2[0] != c.beta2[1]
            for _, cands in self.levels for c in cands
        )

    def to_dict(self) -> dict:
        levels = []
        for d, cands in self.levels:
            levels.append({
                "log_d": d,
                "candidates": len(cands),
                "mismatches": [list(c.beta1) for c in cands],
                "second_component": [list(c.beta2) for c in cands],
            })
        out = {
            "log_d_max": self.log_d_max,
            "levels": levels,
            "uniform_mismatch": self.mismatches[0] if len(self.mismatches) == 1 else None,
            "second_component_mismatch": self.second_mismatches[0] if len(self.second_mismatches) == 1 else None,
        }
        if self.no_glued_isogeny:
            out["conclusion"] = {"no_glued_csd_isogeny_up_to": self.log_d_max}
        else:
            out["conclusion"] = {"glued_candidate_found": True}
        return out


def verify_no_csd_isogeny(glued: GluedGroup, log_d_max: int, parallel: Optional[int] = None) -> VerificationReport:
    """
    Enumerate every isogeny of the glued fiber to a completely slope divisible target up to
    log-degree log_d_max and compare the degrees of β_1, β_2 in the two charts.

    Over a field such an isogeny is diagonal on the isoclinic factors, so candidates are
    pairs (φ', φ'') of per-factor isogenies with log_d(φ') + log_d(φ'') = d.
    """
    N = glued.fiber0.ring.N
    if log_d_max < 0 or log_d_max > N - 3:
        raise InvalidParams(f"log_d_max must lie in [0, {N - 3}], got {log_d_max}")
    cap = get_candidate_cap()
    per_factor = []
    for X in glued.factors0:
        sd = _factor_slope_data(X)
        per_factor.append({d: enumerate_csd_isogenies(X, d, sd, parallel) for d in range(log_d_max + 1)})
    workers = resolve_workers(parallel)
    levels = []
    for d in range(log_d_max + 1):
        pairs = [(f1, f2) for d1 in range(d + 1) for f1 in per_factor[0][d1] for f2 in per_factor[1][d - d1]]
        if len(pairs) > cap:
            raise BudgetExceeded(f"{len(pairs)} candidates of log-degree {d} exceed the cap {cap}")
        if workers > 1:
            reports = [None] * len(pairs)
            with ThreadPoolExecutor(max_workers=workers) as executor:
                futures = {executor.submit(_evaluate, glued, f1, f2): i for i, (f1, f2) in enumerate(pairs)}
                for future in as_completed(futures):
                    reports[futures[future]] = future.result()
        else:
            reports = [_evaluate(glued, f1, f2) for f1, f2 in pairs]
        logger.debug(f"log-degree {d}: {len(reports)} candidates")
        levels.append((d, tuple(reports)))
    report = VerificationReport(log_d_max, tuple(levels))
    logger.info(f"mismatch on β_1: {report.mismatches}, on β_2: {report.second_mismatches}")
    return report
