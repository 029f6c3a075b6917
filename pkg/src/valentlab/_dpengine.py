"""Streaming evaluation of the layered prefix recursion behind chain sums.

A chain sum factorizes through the layer recursion

    f_1(x) = w(x),        f_j(x) = w(x) * sum_{y rel x} f_{j-1}(y),

where ``rel`` is ``<=`` or ``<`` according to position parity, and the answer
is sum_x f_n(x).  Both engines below consume the log-weights in ascending-x
chunks and carry only per-layer running prefixes between chunks, so a
truncation ladder can extend T without recomputing earlier ranges and memory
stays bounded by the chunk size.

Two interchangeable engines:

* ``NumpyAccumulator`` works entirely in the log domain with
  ``np.logaddexp.accumulate`` (running-max rescaling happens inside the ufunc).
  Simple, supports extended precision via longdouble, ~40 ns/cell.

* ``FastAccumulator`` keeps each layer's running prefix in *scaled linear*
  form prefix_j = shat[j] * exp(escale[j]).  Per element it needs one exp and
  a handful of multiply-adds (~2 ns/cell).  The per-layer scales make values
  like n^(-p n) representable: a layer's scale is pinned when its first
  nonzero value arrives, and a prefix that outgrows 1e150 is renormalized.
  The cached factors delta[j] = exp(escale[j-1] - escale[j]) translate a
  prefix from layer j-1's scale into layer j's; they are only touched at
  (rare) rescale events, never per element.

Chunk boundaries are fixed by the caller, so results are bit-reproducible
regardless of how a ladder is scheduled.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap if not (args and callable(args[0])) else args[0]


_BIG = 1e150
_INV_BIG = 1e-150
_LN_BIG = math.log(_BIG)


@njit(cache=True, nogil=True)
def _scaled_linear_chunk(logw, strict, shat, escale, delta):  # pragma: no cover - jitted
    n = shat.shape[0]
    for idx in range(logw.shape[0]):
        lw = logw[idx]
        if lw == -math.inf:
            continue
        w = math.exp(lw)
        prev = w * delta[0]
        if prev == 0.0 and shat[0] == 0.0:
            # first nonzero weight pins layer 0's scale
            escale[0] = lw
            delta[0] = math.exp(-lw) if -lw < 700.0 else 0.0
            if n > 1:
                d = escale[0] - escale[1]
                delta[1] = math.exp(d) if d < 700.0 else 0.0
            prev = 1.0
        for j in range(1, n):
            if strict[j - 1]:
                src = shat[j - 1]          # prefix up to x-1
                shat[j - 1] += prev
            else:
                shat[j - 1] += prev
                src = shat[j - 1]          # prefix including x
            v = w * src * delta[j]
            if shat[j] == 0.0 and src > 0.0:
                # first value reaching layer j pins its scale; delta for the
                # next layer is refreshed because it reads escale[j]
                escale[j] = escale[j - 1] + lw + math.log(src)
                d = escale[j - 1] - escale[j]
                delta[j] = math.exp(d) if d < 700.0 else 0.0
                if j + 1 < n:
                    d = escale[j] - escale[j + 1]
                    delta[j + 1] = math.exp(d) if d < 700.0 else 0.0
                v = 1.0
            if shat[j - 1] > _BIG:
                shat[j - 1] *= _INV_BIG
                escale[j - 1] += _LN_BIG
                delta[j - 1] *= _INV_BIG
                delta[j] *= _BIG
            prev = v
        shat[n - 1] += prev
        if shat[n - 1] > _BIG:
            shat[n - 1] *= _INV_BIG
            escale[n - 1] += _LN_BIG
            delta[n - 1] *= _INV_BIG


class FastAccumulator:
    """Scaled-linear streaming engine (numba kernel)."""

    def __init__(self, n: int, strict: np.ndarray):
        if not HAVE_NUMBA:
            raise RuntimeError("fast engine requires numba")
        self.n = n
        self._strict = np.ascontiguousarray(strict, dtype=np.bool_)
        self._shat = np.zeros(n)
        self._escale = np.zeros(n)
        self._delta = np.ones(n)

    def feed(self, logw: np.ndarray) -> None:
        _scaled_linear_chunk(
            np.ascontiguousarray(logw, dtype=np.float64),
            self._strict,
            self._shat,
            self._escale,
            self._delta,
        )

    def _layer_log(self, j: int) -> float:
        s = self._shat[j]
        if s == 0.0:
            return -math.inf
        return self._escale[j] + math.log(s)

    @property
    def log_s(self) -> float:
        return self._layer_log(self.n - 1)

    @property
    def log_first_layer(self) -> float:
        """log sum of the bare weights consumed so far."""
        return self._layer_log(0)


class NumpyAccumulator:
    """Log-domain streaming engine; dtype float64 or longdouble."""

    def __init__(self, n: int, strict: np.ndarray, dtype=np.float64):
        self.n = n
        self._strict = np.asarray(strict, dtype=bool)
        self._dtype = np.dtype(dtype)
        self._carry = np.full(n, -math.inf, dtype=self._dtype)

    def feed(self, logw: np.ndarray) -> None:
        lw = np.asarray(logw, dtype=self._dtype)
        carry = self._carry
        new_carry = np.empty(self.n, dtype=self._dtype)
        prefix = np.logaddexp(carry[0], np.logaddexp.accumulate(lw))
        new_carry[0] = prefix[-1]
        for j in range(1, self.n):
            if self._strict[j - 1]:
                shifted = np.concatenate((carry[j - 1 : j], prefix[:-1]))
            else:
                shifted = prefix
            prefix = np.logaddexp(carry[j], np.logaddexp.accumulate(lw + shifted))
            new_carry[j] = prefix[-1]
        self._carry = new_carry

    @property
    def log_s(self) -> float:
        return float(self._carry[self.n - 1])

    @property
    def log_first_layer(self) -> float:
        return float(self._carry[0])


def make_accumulator(n: int, strict: np.ndarray, engine: str = "auto",
                     precision: str = "standard", size_hint: int = 0):
    """Pick an engine.  ``auto`` uses the fast kernel once the grid is large
    enough to amortize JIT compilation; extended precision forces numpy."""
    if precision not in ("standard", "extended"):
        raise ValueError(f"unknown precision mode {precision!r}")
    if precision == "extended":
        if engine == "fast":
            raise ValueError("extended precision is only available on the numpy engine")
        return NumpyAccumulator(n, strict, dtype=np.longdouble)
    if engine == "numpy":
        return NumpyAccumulator(n, strict)
    if engine == "fast":
        return FastAccumulator(n, strict)
    if engine == "auto":
        if HAVE_NUMBA and size_hint >= (1 << 20):
            return FastAccumulator(n, strict)
        return NumpyAccumulator(n, strict)
    raise ValueError(f"unknown engine {engine!r}")
