"""Extended-real scalars and array helpers.

Values live in R U {-inf, +inf} and are stored as IEEE doubles.  Addition
follows the inf-addition convention: ``(+inf) + (-inf) = +inf``.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = [
    "ExtReal",
    "PLUS_INF",
    "MINUS_INF",
    "ext_add",
    "ext_add_arrays",
    "ext_sub_arrays",
    "is_finite",
]


class ExtReal(float):
    """A float restricted to R U {-inf, +inf} with inf-addition.

    NaN is rejected at construction.  Ordering is inherited from float, so
    ``MINUS_INF < ExtReal(a) < PLUS_INF`` for every finite ``a``.
    """

    __slots__ = ()

    def __new__(cls, value=0.0):
        v = float(value)
        if math.isnan(v):
            raise ValueError("ExtReal does not admit NaN")
        return super().__new__(cls, v)

    @property
    def tag(self) -> str:
        if self == math.inf:
            return "PlusInf"
        if self == -math.inf:
            return "MinusInf"
        return "Finite"

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self)

    def __add__(self, other):
        return ext_add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return ExtReal(-float(self))

    def __sub__(self, other):
        return ext_add(self, -ExtReal(other))

    def __rsub__(self, other):
        return ext_add(ExtReal(other), -self)

    def __repr__(self) -> str:
        if self.is_finite:
            return f"ExtReal({float(self)!r})"
        return f"ExtReal.{self.tag}"


PLUS_INF = ExtReal(math.inf)
MINUS_INF = ExtReal(-math.inf)


def ext_add(a, b) -> ExtReal:
    """Inf-addition: any ``+inf`` operand dominates."""
    a = float(a)
    b = float(b)
    if a == math.inf or b == math.inf:
        return PLUS_INF
    return ExtReal(a + b)


def ext_add_arrays(a, b) -> np.ndarray:
    """Elementwise inf-addition of broadcastable float arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        out = a + b
    plus = np.isposinf(a) | np.isposinf(b)
    return np.where(plus, np.inf, out)


def ext_sub_arrays(a, b) -> np.ndarray:
    """``a + (-b)`` under inf-addition."""
    return ext_add_arrays(a, -np.asarray(b, dtype=float))


def is_finite(a) -> np.ndarray:
    return np.isfinite(np.asarray(a, dtype=float))
