#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Exception hierarchy. Every error carries a stable code (the class name) that the CLI
reports as {"error": code, "detail": ...}.
"""


class DvlabError(Exception):
    """Base class for all mathematical failure states"""

    exit_code = 1

    def __init__(self, detail: str = ""):
        super().__init__(detail)
        self.detail = detail

    @property
    def code(self) -> str:
        return type(self).__name__

    def to_dict(self) -> dict:
        return {"error": self.code, "detail": self.detail}


class NotPrime(DvlabError):
    pass


class InvalidParams(DvlabError):
    pass


class NonUnit(DvlabError):
    pass


class DimensionMismatch(DvlabError):
    pass


class RingMismatch(DvlabError):
    pass


class NotAnExtension(DvlabError):
    pass


class NotAlphaP(DvlabError):
    pass


class NotStable(DvlabError):
    pass


class PrecisionExhausted(DvlabError):
    pass


class InsufficientPrecision(DvlabError):
    pass


class NoStabilization(DvlabError):
    """Internal: an iteration that must stabilise did not."""


class NotIntegral(DvlabError):
    pass


class NotCSD(DvlabError):
    pass


class NotIsoclinic(DvlabError):
    pass


class DescentFailed(DvlabError):
    pass


class BudgetExceeded(DvlabError):
    pass


class InvariantViolation(DvlabError):
    pass


class NotSolvable(DvlabError):
    pass
