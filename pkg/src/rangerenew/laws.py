"""Discrete laws on the positive integers.

All laws have non-increasing, strictly positive probabilities
``pi_1 >= pi_2 >= ... > 0`` (finite laws: within their support).  Each law
knows its exact pmf, certified bounds on its tail masses, and how to turn
counter-based uniforms into exact draws.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import rng as _rng

ZIPF_HEAD_TERMS = 10**6
ZIPF_SAMPLER_TABLE = 4096


class LawParameterError(ValueError):
    """Invalid parameters for a law constructor or law spec string."""


class OutOfSupportWarning(UserWarning):
    """A finite (oracle-only) law was queried beyond its support."""


@dataclass(frozen=True)
class RegularProfile:
    """The ``(gamma, zeta, phi)`` triple of a gamma-regular law.

    ``phi`` is the inverse of ``zeta``.  For the geometric law only
    ``gamma = 1`` is recorded (the one-regular closed forms apply) and both
    callables are ``None``.
    """

    gamma: float
    zeta: Optional[Callable[[float], float]]
    phi: Optional[Callable[[float], float]]


class DiscreteLaw:
    """Base class; concrete laws override the hooks below."""

    kind: str = ""
    support_size: Optional[int] = None  # None for infinite support
    oracle_only = False

    @property
    def spec(self) -> str:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.spec}>"

    def pmf_range(self, start: int, stop: int) -> np.ndarray:
        """``pi_i`` for ``start <= i < stop`` as a float array."""
        raise NotImplementedError

    def tail_mass(self, n: int) -> float:
        """Certified upper bound on ``sum_{i>n} pi_i``."""
        raise NotImplementedError

    def tail_power_sum(self, n: int, k: int) -> float:
        """Certified upper bound on ``sum_{i>n} pi_i**k`` (k >= 1)."""
        return self.tail_mass(n) ** k

    def _from_uniforms(self, u: np.ndarray, master_seed: int, streams: np.ndarray, start: int) -> np.ndarray:
        raise NotImplementedError

    def draw(self, master_seed: int, streams, start: int, count: int) -> np.ndarray:
        """Draws ``start .. start+count-1`` of each stream, shape ``(len(streams), count)``.

        Values are integer-valued float64 indices (exact below 2**53).
        """
        streams = np.atleast_1d(np.asarray(streams, dtype=np.uint64))
        u = _rng.stream_uniforms(master_seed, streams, _rng.TAG_XI, start, count)
        return self._from_uniforms(u, master_seed, streams, start)


def _inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cdf, u, side="right")
    np.minimum(idx, cdf.size - 1, out=idx)
    return (idx + 1).astype(np.float64)


class ZipfLaw(DiscreteLaw):
    """``pi_i = i**(-alpha) / Z`` with ``alpha = 1/gamma > 1``."""

    kind = "zipf"

    def __init__(self, gamma: float):
        if not (0.0 < gamma < 1.0):
            raise LawParameterError(f"zipf gamma must lie in the open interval (0,1), got {gamma!r}")
        self.gamma = float(gamma)
        self.alpha = 1.0 / self.gamma
        self.normalizer, self.normalizer_error = zipf_normalizer(self.alpha)
        head = self.pmf_range(1, ZIPF_SAMPLER_TABLE + 1)
        self._head_cdf = np.cumsum(head)
        # exact head mass via fsum so the head/tail split is consistent
        self._head_cdf[-1] = math.fsum(head)

    @property
    def spec(self):
        return f"zipf:gamma={self.gamma!r}"

    def pmf_range(self, start, stop):
        i = np.arange(start, stop, dtype=np.float64)
        return i ** (-self.alpha) / self.normalizer

    def tail_mass(self, n):
        if n < 1:
            return 1.0
        return n ** (1.0 - self.alpha) / ((self.alpha - 1.0) * self.normalizer)

    def tail_power_sum(self, n, k):
        if n < 1:
            return 1.0
        ka = k * self.alpha
        return n ** (1.0 - ka) / ((ka - 1.0) * self.normalizer**k)

    def _from_uniforms(self, u, master_seed, streams, start):
        out = _inverse_cdf(self._head_cdf, u)
        rows, cols = np.nonzero(u >= self._head_cdf[-1])
        if rows.size:
            out[rows, cols] = self._tail_draws(master_seed, streams[rows], start + cols)
        return out

    def _tail_draws(self, master_seed, streams, positions):
        """Exact draws from ``pi`` conditioned on ``i > ZIPF_SAMPLER_TABLE``.

        Proposal: ``X`` with density proportional to ``x**-alpha`` on
        ``[H + 1/2, inf)``, rounded to the nearest integer ``i``; ``i`` then
        has mass proportional to the integral of ``x**-alpha`` over
        ``[i - 1/2, i + 1/2]``, which dominates ``i**-alpha`` by convexity.
        Accept with the ratio of the two.
        """
        a = self.alpha
        x0 = ZIPF_SAMPLER_TABLE + 0.5
        result = np.empty(streams.size)
        pending = np.arange(streams.size)
        attempt = 0
        while pending.size:
            lanes = _rng.block_uniforms(master_seed, streams[pending], positions[pending],
                                        _rng.TAG_XI_TAIL, attempt)
            x = x0 * np.exp(-np.log1p(-lanes[:, 0]) / (a - 1.0))
            x = np.minimum(x, 2.0**1000)
            i = np.floor(x + 0.5)
            lo = i - 0.5
            # i**-a / int_{i-1/2}^{i+1/2} x**-a dx, cancellation-safe
            ratio = (a - 1.0) * np.exp(-a * np.log(i) + (a - 1.0) * np.log(lo)) / (
                -np.expm1((1.0 - a) * np.log1p(1.0 / lo))
            )
            ok = lanes[:, 1] * 1.0 <= ratio
            result[pending[ok]] = i[ok]
            pending = pending[~ok]
            attempt += 1
        return result


def zipf_normalizer(alpha: float, head_terms: int = ZIPF_HEAD_TERMS) -> tuple[float, float]:
    """``sum_{i>=1} i**-alpha`` with a certified absolute error bound.

    Head summed exactly-rounded to ``N = head_terms``; the tail comes from
    Euler-Maclaurin through the ``f'''`` term.  ``x**-alpha`` is completely
    monotone, so the remainder is bounded by the first omitted term.
    """
    if alpha <= 1.0:
        raise LawParameterError("the zipf series diverges for alpha <= 1")
    n = float(head_terms)
    head = math.fsum((np.arange(head_terms, 0, -1, dtype=np.float64) ** (-alpha)).tolist())
    a = alpha
    # sum_{i>N} f(i) = int_N^inf f - f(N)/2 - f'(N)/12 + f'''(N)/720 + R
    tail = (n ** (1.0 - a) / (a - 1.0) - 0.5 * n ** (-a) + a * n ** (-a - 1.0) / 12.0
            - a * (a + 1.0) * (a + 2.0) * n ** (-a - 3.0) / 720.0)
    remainder = a * (a + 1.0) * (a + 2.0) * (a + 3.0) * (a + 4.0) * n ** (-a - 5.0) / 30240.0
    value = head + tail
    rounding = 4.0 * np.finfo(float).eps * value
    return value, remainder + rounding


class GeometricLaw(DiscreteLaw):
    """``pi_i = (1 - q) q**(i-1)``."""

    kind = "geom"

    def __init__(self, q: float):
        if not (0.0 < q < 1.0):
            raise LawParameterError(f"geometric q must lie in the open interval (0,1), got {q!r}")
        self.q = float(q)

    @property
    def spec(self):
        return f"geom:q={self.q!r}"

    def pmf_range(self, start, stop):
        i = np.arange(start, stop, dtype=np.float64)
        return (1.0 - self.q) * np.exp((i - 1.0) * math.log(self.q))

    def tail_mass(self, n):
        return self.q ** max(n, 0)

    def tail_power_sum(self, n, k):
        n = max(n, 0)
        return (1.0 - self.q) ** k * self.q ** (k * n) / (1.0 - self.q**k)

    def _from_uniforms(self, u, master_seed, streams, start):
        return 1.0 + np.floor(np.log1p(-u) / math.log(self.q))


class FiniteLaw(DiscreteLaw):
    """A law on ``{1..K}``; desk-scale oracle support only."""

    kind = "finite"
    oracle_only = True

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.size == 0:
            raise LawParameterError("finite law needs at least one weight")
        if not np.all(w > 0):
            raise LawParameterError("finite weights must be strictly positive")
        if abs(math.fsum(w.tolist()) - 1.0) > 1e-9:
            raise LawParameterError(f"finite weights must sum to 1 (got {math.fsum(w.tolist())!r})")
        self.weights = np.sort(w)[::-1].copy()
        self.weights.setflags(write=False)
        self.support_size = int(w.size)
        self._cdf = np.cumsum(self.weights)

    @property
    def spec(self):
        return "finite:" + ",".join(repr(float(x)) for x in self.weights)

    def pmf_range(self, start, stop):
        out = np.zeros(max(stop - start, 0))
        lo, hi = max(start, 1), min(stop, self.support_size + 1)
        if hi > lo:
            out[lo - start : hi - start] = self.weights[lo - 1 : hi - 1]
        return out

    def tail_mass(self, n):
        n = max(n, 0)
        return math.fsum(self.weights[n:].tolist()) if n < self.support_size else 0.0

    def _from_uniforms(self, u, master_seed, streams, start):
        return _inverse_cdf(self._cdf, u)


class FactorialGapLaw(DiscreteLaw):
    """``pi_i = 2[(1/2)**(i!) - (1/2)**((i+1)!)]``.

    Variance collapses along ``t_n = 2**(n! sqrt(n+1))``.  Probabilities for
    ``i >= 7`` underflow to zero in double precision.
    """

    kind = "factgap"

    @property
    def spec(self):
        return "factgap"

    @staticmethod
    def _pmf_scalar(i: int) -> float:
        fi = math.factorial(i)
        if fi - 1 > 1100:
            return 0.0
        # 2^(1 - i!) * (1 - 2^(-i * i!)), the bracket via expm1
        return math.ldexp(-math.expm1(-i * fi * math.log(2.0)), 1 - fi)

    def pmf_range(self, start, stop):
        return np.array([self._pmf_scalar(i) for i in range(start, stop)], dtype=np.float64)

    def tail_mass(self, n):
        # telescoping: sum_{i>n} pi_i = 2 * (1/2)^((n+1)!)
        f = math.factorial(max(n, 0) + 1)
        return math.ldexp(1.0, 1 - f) if f < 1100 else 5e-324

    def _from_uniforms(self, u, master_seed, streams, start):
        # F(i) = 1 - 2^(1-(i+1)!); F(4) rounds to 1, so i >= 5 is below
        # the 2^-53 resolution of the uniforms
        cdf = np.array([1.0 - math.ldexp(1.0, 1 - math.factorial(i + 1)) for i in (1, 2, 3)] + [1.0])
        return _inverse_cdf(cdf, u)


def make_zipf(gamma: float) -> ZipfLaw:
    return ZipfLaw(gamma)


def make_geometric(q: float) -> GeometricLaw:
    return GeometricLaw(q)


def make_finite(weights) -> FiniteLaw:
    return FiniteLaw(weights)


def make_factorial_gap() -> FactorialGapLaw:
    return FactorialGapLaw()


def pmf(law: DiscreteLaw, i: int) -> float:
    """Exact ``pi_i``.  Finite laws return 0 beyond support, with a warning."""
    if i < 1:
        raise ValueError(f"pmf index must be >= 1, got {i}")
    if law.support_size is not None and i > law.support_size:
        warnings.warn(f"{law.spec} is oracle-only; index {i} is outside its support",
                      OutOfSupportWarning, stacklevel=2)
        return 0.0
    if isinstance(law, FactorialGapLaw):
        return law._pmf_scalar(i)
    return float(law.pmf_range(i, i + 1)[0])


def sample(law: DiscreteLaw, state: _rng.RngState, size: Optional[int] = None):
    """Exact draw(s) from ``law``; advances ``state``."""
    count = 1 if size is None else int(size)
    out = law.draw(state.master_seed, [state.stream_id], state.position, count)[0]
    state.position += count
    if size is None:
        return int(out[0])
    return out


def regular_profile(law: DiscreteLaw) -> Optional[RegularProfile]:
    if isinstance(law, ZipfLaw):
        g, z, a = law.gamma, law.normalizer, law.alpha
        return RegularProfile(
            gamma=g,
            zeta=lambda y: (y / z) ** g,
            phi=lambda n: z * n**a,
        )
    if isinstance(law, GeometricLaw):
        return RegularProfile(gamma=1.0, zeta=None, phi=None)
    return None


_NUM = r"([-+0-9.eE]+)"


def parse_law(text: str) -> DiscreteLaw:
    """Parse ``zipf:γ=0.5`` / ``zipf:gamma=0.5``, ``geom:q=0.5``,
    ``finite:0.5,0.3,0.2`` or ``factgap``."""
    s = text.strip()
    try:
        if s == "factgap":
            return make_factorial_gap()
        m = re.fullmatch(r"zipf:(?:γ|gamma)=" + _NUM, s)
        if m:
            return make_zipf(float(m.group(1)))
        m = re.fullmatch(r"geom:q=" + _NUM, s)
        if m:
            return make_geometric(float(m.group(1)))
        if s.startswith("finite:"):
            return make_finite([float(x) for x in s[len("finite:"):].split(",")])
    except ValueError as exc:
        raise LawParameterError(f"bad law spec {text!r}: {exc}") from None
    raise LawParameterError(
        f"unknown law spec {text!r}; expected zipf:γ=G, geom:q=Q, finite:w1,w2,... or factgap"
    )
