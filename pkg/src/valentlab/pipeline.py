"""Dyadic coarsening of chain sums and the chain of approximations built on it.

The route goes: coarsen every index to its level in a geometric partition
(alpha^i <= y < alpha^(i+1)), reduce the sum to level-occupancy combinatorics,
smooth the per-level counts so they make sense at real occupancies, and
maximize the smoothed summand on the simplex with a Lagrange multiplier.  Each
stage is an explicit function here so the stages can be compared against each
other and against the exact evaluators on small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import xlogy

from .chainsum import (
    ChainSpec,
    FunctionWeight,
    ResourceCapError,
    SizeLimitError,
    chain_sum,
    k_value,
)
from .lognum import LogNum
from .specialfn import j_constant, log_gamma

_SNAP_TOL = 1e-9


def _snapped_powers(alpha: float, count: int) -> np.ndarray:
    """alpha^0 .. alpha^(count-1) with near-integer values snapped exactly.

    Exact integer boundaries matter because the levels are half-open: a float
    8.000000000000002 for alpha^3 = 8 would shift one integer between levels.
    """
    out = np.empty(count)
    b = 1.0
    for i in range(count):
        r = round(b)
        if abs(b - r) < _SNAP_TOL:
            b = float(r)
        out[i] = b
        b *= alpha
    if not np.all(np.isfinite(out)):
        raise ValueError("partition boundaries overflow doubles; reduce l or alpha")
    return out


@dataclass(frozen=True)
class DyadicPartition:
    """Geometric level structure: level i covers the integers in [alpha^i, alpha^(i+1)).

    ``c[i]`` counts those integers (kept as float64: top levels of a large
    partition exceed exact-integer range).  ``T_domain`` is the largest integer
    covered, i.e. the top of the last level (or the explicit cut when built
    with :func:`partition_for_domain`).
    """

    alpha: float
    c: np.ndarray
    boundaries: np.ndarray  # alpha^0 .. alpha^(l+1), snapped
    T_domain: int
    T_prime: float

    @property
    def levels(self) -> int:
        """Top level index l."""
        return len(self.c) - 1

    @property
    def c_int(self) -> tuple[int, ...]:
        if np.any(self.c > 2.0 ** 53):
            raise OverflowError("level counts exceed exact integer range")
        return tuple(int(round(v)) for v in self.c)

    def level_of(self, xs):
        """Level index of integer values (scalar or array); 1 is always level 0."""
        arr = np.asarray(xs)
        if np.any(arr < 1):
            raise ValueError("levels are defined for integers >= 1")
        idx = np.searchsorted(self.boundaries, arr, side="right") - 1
        return idx if arr.shape else int(idx)

    def log_weights(self, xs, p: float) -> np.ndarray:
        """Log of the coarsened weight P(x)^(-p) = alpha^(-p * level(x))."""
        return -p * math.log(self.alpha) * np.asarray(self.level_of(xs), dtype=np.float64)


def make_partition(n: int, alpha: float, A: float,
                   cap: Optional[int] = None) -> DyadicPartition:
    """Partition with l = floor(A * log_alpha(n)) full levels.

    When the nominal domain n^A exceeds ``cap``, l is recomputed from the
    effective truncation instead, so the level structure always matches the
    range actually summable.
    """
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha!r}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n!r}")
    lna = math.log(alpha)
    t_nominal = float(n) ** A
    if cap is not None and t_nominal > cap:
        t_eff = float(cap)
        l = int(math.floor(math.log(t_eff) / lna))
    else:
        t_eff = t_nominal
        l = int(math.floor(A * math.log(n) / lna)) if n > 1 else 0
    bounds = _snapped_powers(alpha, l + 2)
    c = np.ceil(bounds[1:]) - np.ceil(bounds[:-1])
    t_domain = int(math.ceil(bounds[-1])) - 1
    return DyadicPartition(alpha=alpha, c=c, boundaries=bounds,
                           T_domain=t_domain, T_prime=alpha * t_eff)


def partition_for_domain(T: int, alpha: float) -> DyadicPartition:
    """Partition covering exactly 1..T, the last level truncated at T."""
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha!r}")
    if T < 1:
        raise ValueError(f"domain bound must be >= 1, got {T!r}")
    bounds = [1.0]
    while True:
        b = bounds[-1] * alpha
        r = round(b)
        if abs(b - r) < _SNAP_TOL:
            b = float(r)
        bounds.append(b)
        if b > T:
            break
    bounds = np.array(bounds)
    c = np.ceil(bounds[1:]) - np.ceil(bounds[:-1])
    c[-1] = T - math.ceil(bounds[-2]) + 1
    return DyadicPartition(alpha=alpha, c=c, boundaries=bounds,
                           T_domain=T, T_prime=float(T))


def dyadic_weight(partition: DyadicPartition, p: float) -> FunctionWeight:
    return FunctionWeight(
        lambda xs: partition.log_weights(xs, p),
        tail_summable=False,
        label=f"dyadic(alpha={partition.alpha}, p={p})",
    )


def dyadic_chain_sum(n: int, p: float, partition: DyadicPartition,
                     engine: str = "auto") -> LogNum:
    """Chain sum with every index coarsened to its level weight.

    Squeezed between the plain truncated sum S and alpha^(n p) * S over the
    same domain, since P(x) <= x < alpha * P(x).
    """
    T = partition.T_domain
    if T > (1 << 26):
        raise ResourceCapError(
            f"dyadic domain {T} too large to sum directly; build the partition "
            "with a cap or use partition_for_domain"
        )
    spec = ChainSpec(n=n, p=p, trunc=T, weight=dyadic_weight(partition, p))
    return chain_sum(spec, engine=engine)


# ---------------------------------------------------------------------------
# within-level combinatorics


def _offsets(length: int, le_first: bool) -> list[int]:
    # number of weak relations among the first j-1 within-group relations
    if le_first:
        return [j // 2 for j in range(1, length + 1)]
    return [(j - 1) // 2 for j in range(1, length + 1)]


def _check_group_relations(y: Sequence[int], le_first: bool) -> None:
    for j in range(1, len(y)):
        weak = (j % 2 == 1) if le_first else (j % 2 == 0)
        if weak:
            if y[j] < y[j - 1]:
                raise ValueError(f"positions {j}, {j+1}: expected y[{j-1}] <= y[{j}]")
        else:
            if y[j] <= y[j - 1]:
                raise ValueError(f"positions {j}, {j+1}: expected y[{j-1}] < y[{j}]")


def shift_map(y: Sequence[int], le_first: bool = True) -> tuple[int, ...]:
    """Bijection from one group's chain onto a strictly increasing sequence.

    ``le_first`` states whether the first within-group relation is weak, which
    is decided by the parity of the number of chain elements before the group.
    Adds 1 to the offset exactly at the weak relations, so ties become strict
    steps; the image of sequences over 1..c is exactly the strict sequences in
    1..c+w with w the last offset.
    """
    _check_group_relations(y, le_first)
    m = _offsets(len(y), le_first)
    return tuple(v + o for v, o in zip(y, m))


def shift_inverse(xs: Sequence[int], le_first: bool = True) -> tuple[int, ...]:
    """Inverse of :func:`shift_map`; input must be strictly increasing."""
    for j in range(1, len(xs)):
        if xs[j] <= xs[j - 1]:
            raise ValueError("shift_inverse expects a strictly increasing sequence")
    m = _offsets(len(xs), le_first)
    return tuple(v - o for v, o in zip(xs, m))


def group_count(c_size: int, a: int, le_first: bool) -> int:
    """Number of admissible length-a chains over a group of c_size integers."""
    if a == 0:
        return 1
    w = a // 2 if le_first else (a - 1) // 2
    return math.comb(c_size + w, a)


def occupancy_count(a: Sequence[int], partition: DyadicPartition,
                    start_parity: int = 0) -> int:
    """Exact number of admissible chains with a_i elements on level i.

    The relation phase entering each group is tracked through the running
    element count; the result is the product of per-group counts.  Returned as
    an exact integer (it can be astronomically large; take math.log for a
    log-scaled view).
    """
    cs = partition.c_int
    if len(a) != len(cs):
        raise ValueError(f"occupancy vector must have {len(cs)} entries, got {len(a)}")
    q = start_parity
    total = 1
    for ai, ci in zip(a, cs):
        if ai < 0 or int(ai) != ai:
            raise ValueError("occupancies must be nonnegative integers")
        total *= group_count(ci, int(ai), q % 2 == 0)
        q += int(ai)
    return total


def log_level_weight(a: Sequence[float], partition: DyadicPartition, p: float) -> float:
    """log alpha^(-p sum i a_i), the weight attached to an occupancy vector."""
    i = np.arange(len(partition.c), dtype=np.float64)
    return -p * math.log(partition.alpha) * float(np.dot(i, np.asarray(a, dtype=np.float64)))


def _log_binom_smooth(c: float, a: float) -> float:
    # log C(c + a/2, a); the Beta-form denominator (c + a/2 + 1) B(a+1, c - a/2 + 1)
    # is the same three Gamma factors rearranged
    return log_gamma(c + 0.5 * a + 1.0) - log_gamma(a + 1.0) - log_gamma(c - 0.5 * a + 1.0)


def occupancy_summand_smooth(a: Sequence[float], partition: DyadicPartition,
                             p: float) -> LogNum:
    """Smoothed summand: level weight times prod C(c_i + a_i/2, a_i).

    Defined for real occupancies 0 <= a_i <= 2 c_i.  At even integers with a
    weak-phase group it reproduces the exact count factor.
    """
    arr = np.asarray(a, dtype=np.float64)
    c = partition.c
    if arr.shape != c.shape:
        raise ValueError(f"occupancy vector must have {len(c)} entries, got {arr.shape}")
    if np.any(arr < 0) or np.any(arr > 2 * c):
        raise ValueError("smoothed summand requires 0 <= a_i <= 2 c_i")
    total = log_level_weight(arr, partition, p)
    for ci, ai in zip(c, arr):
        total += _log_binom_smooth(float(ci), float(ai))
    return LogNum(total)


def _integer_caps(n: int, partition: DyadicPartition) -> list[int]:
    return [min(n, int(2 * ci)) for ci in partition.c]


def _factor_tables(n: int, partition: DyadicPartition, p: float) -> list[np.ndarray]:
    """Per-level log factors of the smoothed summand at integer occupancies."""
    lna = math.log(partition.alpha)
    tables = []
    for i, ci in enumerate(partition.c):
        cap = min(n, int(2 * ci))
        tab = np.empty(cap + 1)
        for ai in range(cap + 1):
            tab[ai] = -p * lna * i * ai + _log_binom_smooth(float(ci), float(ai))
        tables.append(tab)
    return tables


def occupancy_sum_smooth(n: int, partition: DyadicPartition, p: float,
                         max_terms: int = 10 ** 6) -> LogNum:
    """Exact log-sum of the smoothed summand over all integer occupancy vectors.

    Tiny-instance oracle: guarded by the nominal composition count
    C(n + l, l) <= max_terms.
    """
    l = partition.levels
    if math.comb(n + l, l) > max_terms:
        raise SizeLimitError(
            f"{math.comb(n + l, l)} compositions exceed the {max_terms} guard; "
            "use occupancy_max_integer / continuous_max instead"
        )
    tables = _factor_tables(n, partition, p)
    caps = [len(t) - 1 for t in tables]
    suffix_cap = np.concatenate((np.cumsum(caps[::-1])[::-1], [0]))
    logs: list[float] = []

    def rec(level: int, remaining: int, partial: float) -> None:
        if level == len(caps):
            if remaining == 0:
                logs.append(partial)
            return
        if remaining > suffix_cap[level]:
            return
        tab = tables[level]
        for ai in range(min(caps[level], remaining) + 1):
            rec(level + 1, remaining - ai, partial + tab[ai])

    rec(0, n, 0.0)
    if not logs:
        return LogNum.ZERO
    return LogNum(float(np.logaddexp.reduce(np.array(logs))))


def occupancy_at(lam: float, partition: DyadicPartition, p: float) -> np.ndarray:
    """Stationary occupancies a_i = 2 c_i / sqrt(4 alpha^(2 i p) e^(2 lam) + 1)."""
    g = _log_ratio_sq(lam, partition, p)
    return 2.0 * partition.c * np.exp(-0.5 * np.logaddexp(0.0, g))


def _log_ratio_sq(lam: float, partition: DyadicPartition, p: float) -> np.ndarray:
    # g_i with ratio_sq D_i = 1 + e^(g_i) = 1 + 4 alpha^(2 i p) e^(2 lam)
    i = np.arange(len(partition.c), dtype=np.float64)
    return math.log(4.0) + 2.0 * p * math.log(partition.alpha) * i + 2.0 * lam


def solve_multiplier(n: int, partition: DyadicPartition, p: float,
                     rel_residual: float = 1e-9, max_iter: int = 200) -> float:
    """Solve sum_i 2 c_i / sqrt(4 alpha^(2ip) e^(2 lam) + 1) = n for lam.

    The left side is strictly decreasing in lam, so plain bisection converges
    unconditionally; the bracket is grown geometrically from -p ln n.  Needs
    n < sum 2 c_i, otherwise no solution exists.
    """
    c = partition.c
    total = float(np.sum(2.0 * c))
    if not n < total:
        raise ValueError(f"no multiplier: n={n} must be below sum 2 c_i = {total}")

    def occupancy_total(lam: float) -> float:
        return float(np.sum(occupancy_at(lam, partition, p)))

    lam0 = -p * math.log(n) if n > 1 else 0.0
    lo = hi = lam0
    step = 1.0
    while occupancy_total(lo) <= n:
        lo -= step
        step *= 2.0
    step = 1.0
    while occupancy_total(hi) >= n:
        hi += step
        step *= 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if occupancy_total(mid) > n:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, abs(mid)):
            break
    lam = 0.5 * (lo + hi)
    residual = abs(occupancy_total(lam) - n)
    if residual > rel_residual * n:
        raise RuntimeError(
            f"multiplier residual {residual} above {rel_residual * n} after bisection"
        )
    return lam


@dataclass(frozen=True)
class PipelineResult:
    """Continuous maximum of the smoothed summand at a solved multiplier.

    ``ratio_sq[i]`` is (2 c_i / a_i)^2 = 1 + 4 alpha^(2ip) e^(2 lam), ``xi``
    the log-sum term of the maximum, ``log_value`` = lam * n + xi, and ``k``
    the scaled root n * exp(log_value / (n p)).
    """

    lam: float
    ratio_sq: np.ndarray
    xi: float
    log_value: float
    k: float
    residual: float


def continuous_max(n: int, partition: DyadicPartition, p: float,
                   lam: Optional[float] = None) -> PipelineResult:
    """Maximum of the Stirling-form exponent over the real occupancy simplex.

    The log terms are evaluated as 2*ln(sqrt(D)+1) - ln(D-1), which is stable
    both for D near 1 (top levels irrelevant) and for D huge, where the naive
    ln((sqrt(D)+1)/(sqrt(D)-1)) cancels catastrophically.
    """
    if lam is None:
        lam = solve_multiplier(n, partition, p)
    g = _log_ratio_sq(lam, partition, p)
    c = partition.c
    term = np.empty_like(g)
    big = g > 1300.0  # sqrt(D) overflows doubles past here; asymptotic branch
    term[big] = 2.0 * np.exp(-0.5 * g[big])
    sqrt_d = np.exp(0.5 * np.logaddexp(0.0, g[~big]))
    term[~big] = 2.0 * np.log1p(sqrt_d) - g[~big]
    xi = float(np.sum(c * term))
    log_value = lam * n + xi
    with np.errstate(over="ignore"):
        ratio_sq = np.exp(np.logaddexp(0.0, g))
    residual = abs(float(np.sum(occupancy_at(lam, partition, p))) - n)
    return PipelineResult(
        lam=lam,
        ratio_sq=ratio_sq,
        xi=xi,
        log_value=log_value,
        k=k_value(n, p, log_value),
        residual=residual,
    )


def occupancy_max_integer(n: int, partition: DyadicPartition,
                          p: float) -> tuple[LogNum, tuple[int, ...]]:
    """Maximizer of the smoothed summand over integer occupancies.

    Rounds the continuous maximizer, repairs the total greedily, then runs an
    exchange search over coordinate pairs until no single transfer improves.
    The per-level factors are separable and concave in each coordinate, so
    the exchange search cannot stall at a non-maximal point.
    """
    lam = solve_multiplier(n, partition, p)
    star = occupancy_at(lam, partition, p)
    caps = _integer_caps(n, partition)
    a = [min(cap, int(math.floor(x))) for cap, x in zip(caps, star)]

    cache: dict[tuple[int, int], float] = {}
    lna = math.log(partition.alpha)

    def factor(i: int, ai: int) -> float:
        key = (i, ai)
        if key not in cache:
            cache[key] = -p * lna * i * ai + _log_binom_smooth(float(partition.c[i]), float(ai))
        return cache[key]

    def delta_up(i: int) -> float:
        return factor(i, a[i] + 1) - factor(i, a[i]) if a[i] < caps[i] else -math.inf

    def delta_down(i: int) -> float:
        return factor(i, a[i] - 1) - factor(i, a[i]) if a[i] > 0 else -math.inf

    m = len(a)
    while sum(a) < n:
        i = max(range(m), key=delta_up)
        if delta_up(i) == -math.inf:
            raise ValueError(f"no integer occupancy vector sums to {n} under caps {caps}")
        a[i] += 1
    while sum(a) > n:
        i = max(range(m), key=delta_down)
        a[i] -= 1

    for _ in range(50 * m):
        i = max(range(m), key=delta_up)
        j = max(range(m), key=delta_down)
        if i == j or delta_up(i) + delta_down(j) <= 1e-13:
            break
        a[i] += 1
        a[j] -= 1
    total = sum(factor(i, ai) for i, ai in enumerate(a))
    return LogNum(total), tuple(a)


def stirling_exponent(a: Sequence[float], partition: DyadicPartition, p: float) -> float:
    """Factorial-free exponent whose simplex maximum is the continuous stage.

    Convention 0 * ln 0 = 0 covers the boundary occupancies 0 and 2 c_i.
    """
    arr = np.asarray(a, dtype=np.float64)
    c = partition.c
    if np.any(arr < 0) or np.any(arr > 2 * c):
        raise ValueError("stirling exponent requires 0 <= a_i <= 2 c_i")
    i = np.arange(len(c), dtype=np.float64)
    hi = 0.5 * arr + c
    lo = c - 0.5 * arr
    terms = (
        -i * arr * p * math.log(partition.alpha)
        + xlogy(hi, hi)
        - xlogy(arr, arr)
        - xlogy(lo, lo)
    )
    return float(np.sum(terms))


def stirling_gradient(a: Sequence[float], partition: DyadicPartition, p: float) -> np.ndarray:
    """d/da_i of the Stirling exponent: -i p ln alpha + 0.5 ln(c_i^2/a_i^2 - 1/4)."""
    arr = np.asarray(a, dtype=np.float64)
    c = partition.c
    if np.any(arr <= 0) or np.any(arr >= 2 * c):
        raise ValueError("gradient is defined on the open box 0 < a_i < 2 c_i")
    i = np.arange(len(c), dtype=np.float64)
    return -i * p * math.log(partition.alpha) + 0.5 * np.log(c * c / (arr * arr) - 0.25)


def stirling_gap(a: Sequence[float], partition: DyadicPartition, p: float) -> float:
    """log smoothed summand minus the Stirling exponent at the same occupancy."""
    return occupancy_summand_smooth(a, partition, p).log_value - stirling_exponent(a, partition, p)


def multiplier_asymptote(n: int, alpha: float, p: float) -> float:
    """-p ln n + p ln[ (alpha-1)/ln(alpha) * J(p) ], the large-n multiplier."""
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha!r}")
    return -p * math.log(n) + p * math.log((alpha - 1.0) / math.log(alpha) * j_constant(p))


def xi_bounds(n: int, alpha: float, p: float) -> tuple[float, float]:
    """Asymptotic squeeze for xi: n(1-alpha^(-2p))/(2(alpha-1)) up to n alpha(alpha^(2p)-1)/(2(alpha-1))."""
    lo = n * (1.0 - alpha ** (-2.0 * p)) / (2.0 * (alpha - 1.0))
    hi = n * alpha * (alpha ** (2.0 * p) - 1.0) / (2.0 * (alpha - 1.0))
    return lo, hi


def xi_bounds_check(result: PipelineResult, n: int, alpha: float,
                    p: float) -> tuple[float, float, float]:
    """(lower, xi, upper) for harness-side assertion with an o(n) slack budget."""
    lo, hi = xi_bounds(n, alpha, p)
    return lo, result.xi, hi
