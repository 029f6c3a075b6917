"""Log-domain scalars for magnitudes that underflow ordinary doubles."""

from __future__ import annotations

import math
from dataclasses import dataclass

LOG_ZERO = float("-inf")


def log_add(a: float, b: float) -> float:
    """log(e^a + e^b), stable for widely separated operands."""
    if a < b:
        a, b = b, a
    if b == LOG_ZERO:
        return a
    return a + math.log1p(math.exp(b - a))


def log_sum(values) -> float:
    """Running log-sum-exp over an iterable of log values."""
    acc = LOG_ZERO
    for v in values:
        acc = log_add(acc, v)
    return acc


@dataclass(frozen=True, order=True)
class LogNum:
    """A nonnegative real carried as its natural log.

    ``log_value`` is finite or ``-inf`` (the encoding of zero); ``+inf`` and
    NaN are rejected so a poisoned operand cannot silently corrupt a sum.
    """

    log_value: float

    def __post_init__(self):
        lv = self.log_value
        if math.isnan(lv) or lv == math.inf:
            raise ValueError(f"log_value must be finite or -inf, got {lv!r}")

    @classmethod
    def from_value(cls, v: float) -> "LogNum":
        if v < 0:
            raise ValueError("LogNum represents nonnegative magnitudes")
        return cls(math.log(v)) if v > 0 else cls(LOG_ZERO)

    @property
    def value(self) -> float:
        """Plain float value; underflows to 0.0 for very negative logs."""
        return math.exp(self.log_value)

    @property
    def is_zero(self) -> bool:
        return self.log_value == LOG_ZERO

    def __add__(self, other: "LogNum") -> "LogNum":
        return LogNum(log_add(self.log_value, other.log_value))

    def __mul__(self, other: "LogNum") -> "LogNum":
        # -inf + finite = -inf, so zero absorbs as it should
        return LogNum(self.log_value + other.log_value)

    def scaled(self, factor: float) -> "LogNum":
        """Multiply by a positive plain-arithmetic factor."""
        if factor <= 0:
            raise ValueError("factor must be positive")
        return LogNum(self.log_value + math.log(factor))

    def powi(self, k: float) -> "LogNum":
        if self.is_zero:
            if k > 0:
                return LogNum(LOG_ZERO)
            if k == 0:
                return LogNum(0.0)
            raise ZeroDivisionError("negative power of zero")
        return LogNum(k * self.log_value)


LogNum.ZERO = LogNum(LOG_ZERO)
LogNum.ONE = LogNum(0.0)
