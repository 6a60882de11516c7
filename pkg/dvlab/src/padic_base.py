#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Truncated Witt ring W_N(F_{p^a}).

The ring is modelled as (Z/p^N)[x]/(f) where f is the lexicographically smallest monic
irreducible polynomial of degree a over F_p (coefficients compared low degree first),
lifted with coefficients in [0, p). The Frobenius σ is the substitution x -> y with y the
Hensel lift of x^p to a root of f; σ^t is precomputed as a table of powers of σ^t(x).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Iterator, Sequence, Union

from loguru import logger
from sympy import Poly, Symbol

from errors import InvalidParams, InvariantViolation, NonUnit, NotPrime, RingMismatch

INF = math.inf

_X = Symbol("x")


def is_prime(n: int) -> bool:
    """Primality by trial division (inputs up to 2^31)."""
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def int_valuation(n: int, p: int) -> int:
    """p-adic valuation of a non-zero integer."""
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


@dataclass(frozen=True)
class RingParams:
    """p prime, base field F_{p^a}, computations modulo p^N"""
    p: int
    a: int = 1
    N: int = 1

    def __post_init__(self):
        for name in ("p", "a", "N"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise InvalidParams(f"{name} must be an integer, got {value!r}")
        if not is_prime(self.p):
            raise NotPrime(f"{self.p} is not prime")
        if self.a < 1:
            raise InvalidParams(f"field degree a must be >= 1, got {self.a}")
        if self.N < 1:
            raise InvalidParams(f"precision N must be >= 1, got {self.N}")


class RingElem:
    """Element of W_N(F_{p^a}): coordinates in the power basis, each in [0, p^N)."""

    __slots__ = ("ring", "coeffs")

    def __init__(self, ring: "Ring", coeffs: tuple):
        self.ring = ring
        self.coeffs = coeffs

    def _coerce(self, other) -> "RingElem":
        if isinstance(other, RingElem):
            if other.ring is not self.ring and other.ring != self.ring:
                raise RingMismatch(f"{other.ring} vs {self.ring}")
            return other
        if isinstance(other, int):
            return self.ring.from_int(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        q = self.ring.q
        return RingElem(self.ring, tuple((x + y) % q for x, y in zip(self.coeffs, other.coeffs)))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        q = self.ring.q
        return RingElem(self.ring, tuple((x - y) % q for x, y in zip(self.coeffs, other.coeffs)))

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other - self

    def __neg__(self):
        q = self.ring.q
        return RingElem(self.ring, tuple((-x) % q for x in self.coeffs))

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return RingElem(self.ring, self.ring._mul(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __pow__(self, exponent: int):
        if exponent < 0:
            return self.inverse() ** (-exponent)
        result = self.ring.one
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            exponent >>= 1
            if exponent:
                base = base * base
        return result

    def __eq__(self, other):
        if isinstance(other, int):
            other = self.ring.from_int(other)
        if not isinstance(other, RingElem):
            return NotImplemented
        return self.coeffs == other.coeffs and self.ring == other.ring

    def __hash__(self):
        return hash((self.ring.params, self.coeffs))

    def __repr__(self):
        if self.ring.a == 1:
            return f"{self.coeffs[0]}"
        return f"RingElem{self.coeffs}"

    def is_zero(self) -> bool:
        return not any(self.coeffs)

    @property
    def valuation(self):
        """Largest v < N with self in p^v·R, or INF for zero."""
        p = self.ring.p
        best = INF
        for c in self.coeffs:
            if c:
                v = int_valuation(c, p)
                if v < best:
                    best = v
                    if v == 0:
                        break
        return best

    def is_unit(self) -> bool:
        return self.valuation == 0

    def inverse(self) -> "RingElem":
        return self.ring.inverse(self)

    def frobenius(self, t: int = 1) -> "RingElem":
        return self.ring.frobenius(self, t)

    def divexact_p(self, k: int) -> "RingElem":
        """
        Exact division by p^k for an element of valuation >= k.

        The quotient is only determined modulo p^{N-k}; the canonical lift with coordinates
        c // p^k is returned inside the same ring.
        """
        if k == 0:
            return self
        if self.valuation < k:
            raise NonUnit(f"{self} is not divisible by p^{k}")
        pk = self.ring.p ** k
        return RingElem(self.ring, tuple(c // pk for c in self.coeffs))

    def truncate(self, ring: "Ring") -> "RingElem":
        """Reduce (or lift by the same integer coordinates) into a ring with another precision."""
        if ring.p != self.ring.p or ring.a != self.ring.a:
            raise RingMismatch(f"cannot move {self.ring} element to {ring}")
        q = ring.q
        return RingElem(ring, tuple(c % q for c in self.coeffs))

    def residue(self) -> tuple:
        p = self.ring.p
        return tuple(c % p for c in self.coeffs)

    def to_json(self) -> list:
        return [str(c) for c in self.coeffs]


class Ring:
    """W_N(F_{p^a}) with a precomputed Frobenius"""

    def __init__(self, params: RingParams, modulus: tuple):
        self.params = params
        self.p, self.a, self.N = params.p, params.a, params.N
        self.q = self.p ** self.N
        self.modulus = tuple(modulus)
        self.zero = RingElem(self, (0,) * self.a)
        self.one = RingElem(self, (1,) + (0,) * (self.a - 1))
        if self.a == 1:
            self.gen = self.from_int(-self.modulus[0])
        else:
            self.gen = RingElem(self, (0, 1) + (0,) * (self.a - 2))
        self._frob_tables = self._build_frobenius()
        self.frobenius_image = self.frobenius(self.gen, 1)

    def __eq__(self, other):
        return isinstance(other, Ring) and self.params == other.params

    def __hash__(self):
        return hash(self.params)

    def __repr__(self):
        return f"W_{self.N}(F_{self.p}^{self.a})"

    @property
    def residue_size(self) -> int:
        return self.p ** self.a

    # construction helpers

    def element(self, coeffs: Union[int, Sequence[int]]) -> RingElem:
        if isinstance(coeffs, int):
            return self.from_int(coeffs)
        coeffs = [int(c) for c in coeffs]
        if len(coeffs) > self.a:
            raise InvalidParams(f"expected at most {self.a} coordinates, got {len(coeffs)}")
        coeffs = coeffs + [0] * (self.a - len(coeffs))
        return RingElem(self, tuple(c % self.q for c in coeffs))

    def from_int(self, n: int) -> RingElem:
        return RingElem(self, (n % self.q,) + (0,) * (self.a - 1))

    def p_power(self, k: int) -> RingElem:
        return self.from_int(self.p ** k) if k < self.N else self.zero

    def random_element(self, rng: random.Random) -> RingElem:
        return RingElem(self, tuple(rng.randrange(self.q) for _ in range(self.a)))

    def residue_field_elements(self) -> Iterator[tuple]:
        """All elements of F_{p^a} as coordinate tuples, in lexicographic order."""
        return product(range(self.p), repeat=self.a)

    def truncate(self, N: int) -> "Ring":
        if N == self.N:
            return self
        return make_ring(RingParams(self.p, self.a, N))

    # arithmetic

    def _mul(self, x: tuple, y: tuple) -> tuple:
        q = self.q
        a = self.a
        if a == 1:
            return (x[0] * y[0] % q,)
        prod = [0] * (2 * a - 1)
        for i, xi in enumerate(x):
            if xi:
                for j, yj in enumerate(y):
                    if yj:
                        prod[i + j] += xi * yj
        f = self.modulus
        for k in range(2 * a - 2, a - 1, -1):
            c = prod[k]
            if c:
                base = k - a
                for i in range(a):
                    prod[base + i] -= c * f[i]
        return tuple(v % q for v in prod[:a])

    def inverse(self, x: RingElem) -> RingElem:
        if x.valuation != 0:
            raise NonUnit(f"{x} has positive valuation")
        if self.a == 1:
            return RingElem(self, (pow(x.coeffs[0], -1, self.q),))
        z = x ** (self.residue_size - 2)
        two = self.from_int(2)
        for _ in range(self.N.bit_length() + 2):
            z = z * (two - x * z)
        if x * z != self.one:
            raise InvariantViolation(f"Newton inversion did not converge for {x}")
        return z

    def evaluate(self, coeffs: Sequence[int], y: RingElem) -> RingElem:
        """Evaluate the integer polynomial with low-first coefficients at y (Horner)."""
        acc = self.zero
        for c in reversed(coeffs):
            acc = acc * y + c
        return acc

    # Frobenius

    def _build_frobenius(self) -> list:
        a, q = self.a, self.q
        if a == 1:
            return [[(1,)]]
        f = self.modulus
        derivative = [i * f[i] for i in range(1, a + 1)]
        y = self.gen ** self.p
        for _ in range(2 * self.N.bit_length() + 4):
            fy = self.evaluate(f, y)
            if fy.is_zero():
                break
            y = y - fy * self.evaluate(derivative, y).inverse()
        if not self.evaluate(f, y).is_zero():
            raise InvariantViolation(f"Hensel lift of Frobenius failed for {self}")

        def powers(root: RingElem) -> list:
            table = [self.one.coeffs]
            cur = self.one
            for _ in range(1, a):
                cur = cur * root
                table.append(cur.coeffs)
            return table

        tables = [powers(self.gen), powers(y)]
        image = y
        for _ in range(2, a):
            image = RingElem(self, self._substitute(image.coeffs, tables[1]))
            tables.append(powers(image))
        # σ^a(x) must be x again
        back = RingElem(self, self._substitute(image.coeffs, tables[1]))
        if back != self.gen:
            raise InvariantViolation(f"σ^{a} is not the identity on {self}")
        logger.debug(f"Built {self}: modulus={self.modulus}, σ(x)={y.coeffs}")
        return tables

    def _substitute(self, coeffs: tuple, table: list) -> tuple:
        q = self.q
        out = [0] * self.a
        for c, img in zip(coeffs, table):
            if c:
                for k, v in enumerate(img):
                    out[k] += c * v
        return tuple(v % q for v in out)

    def frobenius(self, x: RingElem, t: int = 1) -> RingElem:
        t %= self.a
        if t == 0:
            return x
        return RingElem(self, self._substitute(x.coeffs, self._frob_tables[t]))

    # Teichmüller representatives

    def teichmuller(self, residue: Union[int, Sequence[int]]) -> RingElem:
        """Multiplicative lift [c] of a residue class c ∈ F_{p^a}."""
        c = self.element(residue)
        c = RingElem(self, tuple(v % self.p for v in c.coeffs))
        if c.is_zero():
            return self.zero
        q_res = self.residue_size
        for _ in range(self.N):
            nxt = c ** q_res
            if nxt == c:
                break
            c = nxt
        return c

    def to_dict(self) -> dict:
        return {"p": self.p, "a": self.a, "N": self.N, "modulus": list(self.modulus)}


def _smallest_irreducible(p: int, a: int) -> tuple:
    """Low-first coefficients (monic) of the lexicographically smallest irreducible polynomial."""
    if a == 1:
        return (0, 1)
    # constant term 0 means divisible by x
    for low in product(range(1, p), *[range(p)] * (a - 1)):
        coeffs = [1] + list(reversed(low))
        if Poly(coeffs, _X, modulus=p).is_irreducible:
            return tuple(low) + (1,)
    raise InvalidParams(f"no irreducible polynomial of degree {a} over F_{p}")


@lru_cache(maxsize=None)
def _irreducible_cached(p: int, a: int) -> tuple:
    return _smallest_irreducible(p, a)


@lru_cache(maxsize=None)
def _build_ring(params: RingParams) -> Ring:
    return Ring(params, _irreducible_cached(params.p, params.a))


def make_ring(params: Union[RingParams, int], a: int = 1, N: int = 1) -> Ring:
    """
    Construct (or fetch from cache) the ring W_N(F_{p^a}).

    Args:
        params: RingParams, or the prime p when a and N are given separately

    Returns:
        Ring whose modulus is the smallest irreducible lift and whose Frobenius is Hensel-lifted
    """
    if not isinstance(params, RingParams):
        params = RingParams(params, a, N)
    return _build_ring(params)


def ring_from_dict(data: dict) -> Ring:
    ring = make_ring(RingParams(int(data["p"]), int(data.get("a", 1)), int(data["N"])))
    modulus = data.get("modulus")
    if modulus is not None and tuple(int(c) for c in modulus) != ring.modulus:
        raise InvalidParams(f"modulus {modulus} does not match the canonical {list(ring.modulus)}")
    return ring


def elem_from_json(ring: Ring, data) -> RingElem:
    if isinstance(data, (int, str)):
        return ring.from_int(int(data))
    return ring.element([int(c) for c in data])


def ring_arith(x: RingElem, y: RingElem = None, op: str = "add") -> RingElem:
    """Exact ring arithmetic: op in {add, sub, mul, inv}."""
    if op == "add":
        return x + y
    if op == "sub":
        return x - y
    if op == "mul":
        return x * y
    if op == "inv":
        return x.inverse()
    raise InvalidParams(f"unknown ring operation {op!r}")


def frobenius(x: RingElem, t: int = 1) -> RingElem:
    return x.ring.frobenius(x, t)


def valuation(x: RingElem):
    return x.valuation
