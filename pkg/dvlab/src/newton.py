#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Newton polygons of Dieudonné modules (V-slopes: G_{m,n} has slope m/(m+n)).

V is linearized over Z/p^N, its characteristic polynomial is computed without division,
and the slopes are read from the lower convex hull of (i, v(c_i)).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from fractions import Fraction
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from loguru import logger

from config import resolve_workers
from errors import InsufficientPrecision, InvalidParams, InvariantViolation
from modular_linalg import Matrix
from padic_base import INF, int_valuation
from semilinear import linearize


def characteristic_polynomial(m: Matrix, q: int) -> List[int]:
    """
    det(t·I - m) over Z/q by Berkowitz's algorithm, coefficients in ascending degree.

    Each step multiplies the vector of the trailing principal block by the Toeplitz matrix
    built from 1, -a, -R·C, -R·A·C, ... of the next larger block.
    """
    n = len(m)
    if n == 0:
        return [1]
    A = np.array([[x.coeffs[0] for x in row] for row in m], dtype=object)
    vec = np.array([1, (-A[n - 1, n - 1]) % q], dtype=object)
    for k in range(n - 2, -1, -1):
        size = n - k
        a = A[k, k]
        R = A[k, k + 1:]
        C = A[k + 1:, k]
        sub = A[k + 1:, k + 1:]
        diags = [1, (-a) % q]
        d = C
        for _ in range(size - 1):
            diags.append((-R.dot(d)) % q)
            d = sub.dot(d) % q
        toeplitz = np.zeros((size + 1, size), dtype=object)
        for i in range(size + 1):
            for j in range(min(i + 1, size)):
                toeplitz[i, j] = diags[i - j]
        vec = toeplitz.dot(vec) % q
    return [int(c) for c in reversed(vec)]


def lower_convex_hull(points: Sequence[tuple]) -> List[tuple]:
    """
    Segments (slope, length) of the lower convex hull of points (i, v), v finite.

    Walks from the leftmost point, always taking the farthest point of least slope.
    """
    pts = sorted(points)
    if not pts:
        return []
    segments = []
    i, v = pts[0]
    last = pts[-1][0]
    while i < last:
        best = None
        for j, w in pts:
            if j <= i:
                continue
            mu = Fraction(w - v, j - i)
            if best is None or mu < best[0] or (mu == best[0] and j > best[1]):
                best = (mu, j, w)
        mu, j, w = best
        segments.append((mu, j - i))
        i, v = j, w
    return segments


@dataclass(frozen=True)
class NewtonPolygon:
    """(slope, multiplicity) pairs, slopes ascending"""
    points: tuple = ()

    def __post_init__(self):
        merged = {}
        for slope, mult in self.points:
            slope = Fraction(slope)
            merged[slope] = merged.get(slope, 0) + int(mult)
        object.__setattr__(self, "points", tuple(sorted(merged.items())))

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    @property
    def height(self) -> int:
        return sum(m for _, m in self.points)

    @property
    def slopes(self) -> List[Fraction]:
        return [s for s, _ in self.points]

    @property
    def dimension(self) -> int:
        return int(sum(s * m for s, m in self.points))

    def merge(self, other: "NewtonPolygon") -> "NewtonPolygon":
        return NewtonPolygon(self.points + other.points)

    def dual(self) -> "NewtonPolygon":
        return NewtonPolygon(tuple((1 - s, m) for s, m in self.points))

    def breakpoints(self) -> List[tuple]:
        out = [(0, Fraction(0))]
        x, y = 0, Fraction(0)
        for s, m in self.points:
            x += m
            y += s * m
            out.append((x, y))
        return out

    def is_integral(self) -> bool:
        return all(y.denominator == 1 for _, y in self.breakpoints())

    def to_json(self) -> list:
        return [{"slope": f"{s.numerator}/{s.denominator}", "mult": m} for s, m in self.points]


def polygon_from_json(data) -> NewtonPolygon:
    if isinstance(data, dict):
        data = data["polygon"]
    return NewtonPolygon(tuple((Fraction(item["slope"]), int(item["mult"])) for item in data))


def newton_polygon(A) -> NewtonPolygon:
    ring, h = A.ring, A.rank
    if h == 0:
        return NewtonPolygon()
    q = ring.q
    coeffs = characteristic_polynomial(linearize(A.V), q)
    vals = [int_valuation(c, ring.p) if c else INF for c in coeffs]
    if vals[0] == INF:
        raise InsufficientPrecision(
            f"det V vanishes modulo p^{ring.N}; its valuation is not determined at this precision"
        )
    # points of valuation >= N lie above every vertex: the hull never rises above v(c_0) < N
    points = [(i, v) for i, v in enumerate(vals) if v != INF]
    segments = lower_convex_hull(points)
    result = []
    for mu, length in segments:
        if length % ring.a:
            raise InvariantViolation(f"slope {-mu} has multiplicity {length} not divisible by a={ring.a}")
        result.append((-mu, length // ring.a))
    polygon = NewtonPolygon(tuple(result))
    if polygon.height != h:
        raise InvariantViolation(f"polygon height {polygon.height} != rank {h}")
    logger.debug(f"Newton polygon of rank-{h} module over {ring}: {polygon.to_json()}")
    return polygon


def is_isoclinic(A) -> Optional[Fraction]:
    polygon = newton_polygon(A)
    if len(polygon) == 1:
        return polygon.slopes[0]
    return None


def p_rank(A) -> int:
    """Multiplicity of slope 0 (the height of the étale part)."""
    return dict(newton_polygon(A).points).get(Fraction(0), 0)


class ConstancyResult(NamedTuple):
    constant: bool
    index: Optional[int]

    def __bool__(self):
        return self.constant


def batch_polygons(modules: Sequence, parallel: Optional[int] = None) -> List[NewtonPolygon]:
    workers = resolve_workers(parallel)
    if workers <= 1:
        return [newton_polygon(A) for A in modules]
    results = [None] * len(modules)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(newton_polygon, A): i for i, A in enumerate(modules)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return results


def is_constant_polygon(modules: Sequence, parallel: Optional[int] = None) -> ConstancyResult:
    if not modules:
        raise InvalidParams("empty list of modules")
    polygons = batch_polygons(modules, parallel)
    for i, polygon in enumerate(polygons[1:], start=1):
        if polygon != polygons[0]:
            return ConstancyResult(False, i)
    return ConstancyResult(True, None)
