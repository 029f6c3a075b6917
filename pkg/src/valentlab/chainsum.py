"""Exact and truncated evaluation of alternating-inequality chain sums.

The object of study is

    s(n) = sum over 1 <= x_1 <= x_2 < x_3 <= x_4 < ... x_n  of  prod w(x_i),

with w(x) = x^(-p) by default.  The relation between positions j and j+1 is
weak for odd j and strict for even j, so the final relation is weak for even n
and strict for odd n.  Everything is carried in the log domain: already for
p = 2 the sums underflow doubles near n ~ 90.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from . import _dpengine
from .lognum import LOG_ZERO, LogNum

BRUTE_MAX_N = 12
BRUTE_MAX_T = 30
DEFAULT_HARD_CAP = 1 << 26
DEFAULT_CHUNK = 1 << 22


class SizeLimitError(ValueError):
    """A combinatorial guard was exceeded."""


class ResourceCapError(RuntimeError):
    """The truncation cap was reached before convergence.

    ``partial`` carries the best estimate available at the cap.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


def strict_relation(idx: int) -> bool:
    """True when the relation between positions idx and idx+1 (1-based) is '<'."""
    return idx % 2 == 0


def strict_pattern(n: int) -> np.ndarray:
    return np.array([strict_relation(j) for j in range(1, n)], dtype=bool)


class PowerWeight:
    """w(x) = x^(-p).  Summable over all integers exactly when p > 1."""

    def __init__(self, p: float):
        self.p = float(p)

    @property
    def tail_summable(self) -> bool:
        return self.p > 1

    def log_weights(self, xs: np.ndarray) -> np.ndarray:
        return -self.p * np.log(np.asarray(xs, dtype=np.float64))

    def __repr__(self):
        return f"PowerWeight(p={self.p})"


class FunctionWeight:
    """Arbitrary positive weight given by a log-weight callable on int arrays."""

    def __init__(self, log_fn: Callable[[np.ndarray], np.ndarray],
                 tail_summable: bool = False, label: str = "custom"):
        self._log_fn = log_fn
        self.tail_summable = tail_summable
        self.label = label

    def log_weights(self, xs: np.ndarray) -> np.ndarray:
        return np.asarray(self._log_fn(np.asarray(xs)), dtype=np.float64)

    def __repr__(self):
        return f"FunctionWeight({self.label})"


@dataclass(frozen=True)
class ChainSpec:
    """One chain-sum instance: length, exponent, truncation and weight.

    ``trunc=None`` means the untruncated series, admitted only when the weight
    has a summable tail (p > 1 for the power weight).
    """

    n: int
    p: float
    trunc: Optional[int] = None
    weight: object = None

    def __post_init__(self):
        if self.n < 0 or int(self.n) != self.n:
            raise ValueError(f"chain length must be a nonnegative integer, got {self.n!r}")
        if self.trunc is not None:
            if self.trunc < 1 or int(self.trunc) != self.trunc:
                raise ValueError(f"trunc must be a positive integer or None, got {self.trunc!r}")
        else:
            if not self.effective_weight.tail_summable:
                raise ValueError(
                    "unbounded truncation requires a summable weight tail (p > 1)"
                )

    @property
    def effective_weight(self):
        return self.weight if self.weight is not None else PowerWeight(self.p)

    @property
    def strict_pattern(self) -> tuple[bool, ...]:
        return tuple(strict_relation(j) for j in range(1, self.n))

    def pattern_string(self) -> str:
        return "".join("<" if s else "<=" for s in self.strict_pattern)

    def log_weight(self, xs: np.ndarray) -> np.ndarray:
        return self.effective_weight.log_weights(xs)


def admissible_tuples(n: int, T: int) -> Iterator[tuple[int, ...]]:
    """Yield every admissible chain over 1..T, in lexicographic order."""
    if n == 0:
        yield ()
        return

    buf = [0] * n

    def rec(j: int, lo: int):
        for x in range(lo, T + 1):
            buf[j - 1] = x
            if j == n:
                yield tuple(buf)
            else:
                yield from rec(j + 1, x + (1 if strict_relation(j) else 0))

    yield from rec(1, 1)


def enumerate_chains(n: int, T: int) -> np.ndarray:
    """All admissible chains over 1..T as rows, by relation-driven expansion.

    Vectorized equivalent of :func:`admissible_tuples`; the two are
    cross-checked in the test suite since this array feeds the oracles.
    """
    if n == 0:
        return np.zeros((1, 0), dtype=np.int32)
    cur = np.arange(1, T + 1, dtype=np.int32).reshape(-1, 1)
    for idx in range(1, n):
        lo = cur[:, -1] + (1 if strict_relation(idx) else 0)
        counts = T - lo + 1
        keep = counts > 0
        cur, lo, counts = cur[keep], lo[keep], counts[keep]
        if cur.shape[0] == 0:
            return np.zeros((0, n), dtype=np.int32)
        total = int(counts.sum())
        rows = np.repeat(np.arange(cur.shape[0]), counts)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        within = np.arange(total, dtype=np.int32) - np.repeat(starts, counts).astype(np.int32)
        cur = np.column_stack([cur[rows], (lo[rows] + within).astype(np.int32)])
    return cur


def chain_sum_brute(spec: ChainSpec) -> LogNum:
    """Exact truncated chain sum by direct enumeration with compensated summation.

    Guarded to n <= 12 and T <= 30; meant as the small-instance oracle.
    """
    if spec.trunc is None:
        raise ValueError("brute evaluation requires a finite truncation")
    if spec.n > BRUTE_MAX_N or spec.trunc > BRUTE_MAX_T:
        raise SizeLimitError(
            f"brute enumeration capped at n <= {BRUTE_MAX_N}, T <= {BRUTE_MAX_T}; "
            f"got n={spec.n}, T={spec.trunc}"
        )
    if spec.n == 0:
        return LogNum.ONE
    chains = enumerate_chains(spec.n, spec.trunc)
    if chains.shape[0] == 0:
        return LogNum.ZERO
    w_tab = np.exp(spec.log_weight(np.arange(1, spec.trunc + 1)))
    products = np.prod(w_tab[chains - 1], axis=1)
    return LogNum(math.log(math.fsum(products.tolist())))


def chain_sum(spec: ChainSpec, engine: str = "auto", precision: str = "standard",
              chunk: int = DEFAULT_CHUNK) -> LogNum:
    """Truncated chain sum by the layer recursion, O(n T) time, chunked memory.

    Equals :func:`chain_sum_brute` wherever the latter is defined.  An empty
    index set (T < ceil(n/2)) yields log 0, not an error.
    """
    if spec.trunc is None:
        raise ValueError("layer recursion requires a finite truncation")
    n, T = spec.n, spec.trunc
    if n == 0:
        return LogNum.ONE
    if T < (n + 1) // 2:
        return LogNum.ZERO
    acc = _dpengine.make_accumulator(
        n, strict_pattern(n), engine=engine, precision=precision, size_hint=n * T
    )
    x0 = 1
    while x0 <= T:
        x1 = min(T, x0 + chunk - 1)
        acc.feed(spec.log_weight(np.arange(x0, x1 + 1, dtype=np.int64)))
        x0 = x1 + 1
    return LogNum(float(acc.log_s))


def power_tail_bound(j: int, p: float) -> float:
    """Upper bound j^(1-p)/(p-1) for sum_{m > j} m^(-p); needs p > 1."""
    if not p > 1:
        raise ValueError(f"tail bound requires p > 1, got {p!r}")
    if j < 1:
        raise ValueError(f"tail bound requires j >= 1, got {j!r}")
    return j ** (1.0 - p) / (p - 1.0)


def k_value(n: int, p: float, log_s: float) -> float:
    """Scaled root k = n * exp(log_s / (n p)); pure in its inputs."""
    if n < 1:
        raise ValueError("k is defined for n >= 1")
    if log_s == LOG_ZERO:
        return 0.0
    return n * math.exp(log_s / (n * p))


@dataclass(frozen=True)
class ChainSumResult:
    """A truncated evaluation together with its truncation bookkeeping."""

    log_s: LogNum
    T_used: int
    tail_estimate: float
    k: float


def _result(n: int, p: float, log_s: float, T: int, tail: float) -> ChainSumResult:
    return ChainSumResult(LogNum(log_s), T, tail, k_value(n, p, log_s))


def chain_sum_adaptive(n: int, p: float, rel_tol: float,
                       hard_cap: int = DEFAULT_HARD_CAP,
                       engine: str = "auto", precision: str = "standard",
                       chunk: int = DEFAULT_CHUNK) -> ChainSumResult:
    """Evaluate the untruncated chain sum by doubling T until k stabilizes.

    T doubles from 4n.  Acceptance needs both the observed relative change of
    k across one doubling below ``rel_tol`` and the single-variable tail bound,
    relative to the captured single-variable mass, below ``rel_tol``.  The
    ladder reuses one streaming accumulator, so the total work is a single
    pass to the final T.  Raises :class:`ResourceCapError` (carrying the best
    estimate) if the cap is hit before both criteria hold.
    """
    if n < 1:
        raise ValueError("adaptive evaluation requires n >= 1")
    if not p > 1:
        raise ValueError(f"untruncated chain sums require p > 1, got {p!r}")
    if not 0 < rel_tol < 0.5:
        raise ValueError(f"rel_tol must lie in (0, 0.5), got {rel_tol!r}")
    if hard_cap < (1 << 10):
        raise ValueError("hard cap below 2^10 is not supported")

    weight = PowerWeight(p)
    acc = _dpengine.make_accumulator(
        n, strict_pattern(n), engine=engine, precision=precision,
        size_hint=n * min(hard_cap, 512 * n),
    )
    T = min(4 * n, hard_cap)
    fed = 0

    def extend(upto: int) -> None:
        nonlocal fed
        while fed < upto:
            x1 = min(upto, fed + chunk)
            acc.feed(weight.log_weights(np.arange(fed + 1, x1 + 1, dtype=np.int64)))
            fed = x1

    extend(T)
    k_prev = k_value(n, p, float(acc.log_s))
    change = math.inf
    while True:
        if T >= hard_cap:
            raise ResourceCapError(
                f"truncation cap {hard_cap} reached before stabilizing to {rel_tol}",
                partial=_result(n, p, float(acc.log_s), T, change),
            )
        T = min(2 * T, hard_cap)
        extend(T)
        log_s = float(acc.log_s)
        k = k_value(n, p, log_s)
        change = abs(k - k_prev) / k if k > 0 else math.inf
        tail_rel = power_tail_bound(T, p) / math.exp(float(acc.log_first_layer))
        if change < rel_tol and tail_rel < rel_tol:
            return _result(n, p, log_s, T, change)
        k_prev = k


@dataclass(frozen=True)
class TruncationDeficit:
    """Normalized log of the mass dropped by a fixed power-law truncation."""

    value: float
    T_used: int
    capped: bool


def truncation_deficit(n: int, p: float, A: float, rel_tol: float = 1e-6,
                       hard_cap: int = DEFAULT_HARD_CAP) -> TruncationDeficit:
    """(1/n) ln(deficit / truncated sum) for the truncation T = floor(n^A).

    The reference value comes from :func:`chain_sum_adaptive`; a numerically
    zero deficit reports -inf.  When floor(n^A) exceeds the cap the value is
    computed at the cap and flagged.
    """
    if not p > 1:
        raise ValueError(f"truncation deficit requires p > 1, got {p!r}")
    t_exact = float(n) ** A
    capped = not (t_exact < hard_cap)
    T = hard_cap if capped else max(1, int(t_exact))
    log_truncated = chain_sum(ChainSpec(n=n, p=p, trunc=T)).log_value
    try:
        full = chain_sum_adaptive(n, p, rel_tol, hard_cap=hard_cap)
        log_full = full.log_s.log_value
    except ResourceCapError as err:
        log_full = err.partial.log_s.log_value
        capped = True
    if log_full <= log_truncated:
        return TruncationDeficit(-math.inf, T, capped)
    log_deficit = log_full + math.log1p(-math.exp(log_truncated - log_full))
    return TruncationDeficit((log_deficit - log_truncated) / n, T, capped)


def growth_offset(n: int, p: float, log_s: float) -> float:
    """b(n) = (log s + p n ln n) / n, the per-step log offset from n^(-p n).

    Bounded above and below in n whenever s(n) is squeezed between
    C1^n n^(-p n) and C2^n n^(-p n).
    """
    if n < 1:
        raise ValueError("growth offset requires n >= 1")
    if isinstance(log_s, LogNum):
        log_s = log_s.log_value
    return (log_s + p * n * math.log(n)) / n
