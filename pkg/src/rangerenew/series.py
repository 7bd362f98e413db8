"""Certified sums ``sum_{i>=start} f(pi_i)`` over a law.

``f`` is a vectorized function of the probability ``p`` with ``f(0) = 0`` and
``|f(p)| <= lip * p`` on the tail.  Head terms are summed directly (chunk
sums combined with ``math.fsum``); the tail is bounded per law:

* finite: no tail;
* geometric, factorial-gap: ``lip * tail_mass(N)``;
* Zipf: Euler-Maclaurin trapezoid tail with the integral done by
  quadrature.  Past the cutoff ``M`` the summand ``g(x) = f(pi(x))`` is
  monotone and of one convexity sign, which pins the trapezoid error
  between 0 and ``|g(M-1) - g(M)| / 8``.  Convexity needs
  ``p |f''(p) / f'(p)| <= 1 + gamma`` for ``p <= pi_M``; callers
  guarantee it through ``ycap``: it must hold whenever ``scale * p <= ycap``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .laws import DiscreteLaw, FactorialGapLaw, FiniteLaw, GeometricLaw, ZipfLaw
from .quadrature import integrate

CHUNK = 1 << 20
MAX_ZIPF_HEAD = 1 << 24
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class CertifiedValue:
    """A value and an absolute error bound: truth lies in ``value ± abs_error``."""

    value: float
    abs_error: float

    def __post_init__(self):
        if not (math.isfinite(self.abs_error) and self.abs_error >= 0.0):
            raise ValueError(f"abs_error must be finite and >= 0, got {self.abs_error!r}")

    def __float__(self):
        return float(self.value)

    @property
    def lo(self):
        return self.value - self.abs_error

    @property
    def hi(self):
        return self.value + self.abs_error

    def __add__(self, other):
        if isinstance(other, CertifiedValue):
            return CertifiedValue(self.value + other.value, self.abs_error + other.abs_error)
        return CertifiedValue(self.value + other, self.abs_error)

    def __sub__(self, other):
        if isinstance(other, CertifiedValue):
            return CertifiedValue(self.value - other.value, self.abs_error + other.abs_error)
        return CertifiedValue(self.value - other, self.abs_error)

    def __neg__(self):
        return CertifiedValue(-self.value, self.abs_error)

    def scaled(self, c: float):
        return CertifiedValue(c * self.value, abs(c) * self.abs_error)


def _head_sum(law, f, start, stop):
    """Sum ``f(pi_i)`` for ``start <= i < stop``; returns (sum, sum of |terms|)."""
    parts, mags = [], []
    for a in range(start, stop, CHUNK):
        b = min(a + CHUNK, stop)
        v = f(law.pmf_range(a, b))
        parts.append(float(np.sum(v)))
        mags.append(float(np.sum(np.abs(v))))
    return math.fsum(parts), math.fsum(mags)


def certified_sum(law: DiscreteLaw, f, *, lip: float, scale: float = 0.0, ycap: float = 1.0,
                  tol: float = 1e-9, start: int = 1) -> CertifiedValue:
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(law, FiniteLaw):
        if start > law.support_size:
            return CertifiedValue(0.0, 0.0)
        s, mag = _head_sum(law, f, start, law.support_size + 1)
        return CertifiedValue(s, 4 * _EPS * mag)
    if isinstance(law, ZipfLaw):
        return _zipf_sum(law, f, lip, scale, ycap, tol, start)
    if isinstance(law, (GeometricLaw, FactorialGapLaw)):
        n = max(start - 1, 0)
        step = 8
        while lip * law.tail_mass(n) > 0.5 * tol and law.tail_mass(n) > 0:
            n += step
            if isinstance(law, FactorialGapLaw):
                step = 1
        if isinstance(law, FactorialGapLaw):
            # below the underflow point every further term is a certified 0
            n = min(max(n, start - 1), 7)
        s, mag = _head_sum(law, f, start, n + 1) if n >= start else (0.0, 0.0)
        return CertifiedValue(s, lip * law.tail_mass(n) + 4 * _EPS * mag)
    raise TypeError(f"unsupported law {law!r}")


def _zipf_sum(law: ZipfLaw, f, lip, scale, ycap, tol, start):
    a, g, z = law.alpha, law.gamma, law.normalizer
    # convexity region: scale * pi_M <= ycap
    m_conv = (scale / (z * ycap)) ** g if scale > 0 else 1.0
    # trapezoid error ~ lip * a * pi_M / (8 M) <= tol / 4
    m_tol = (lip * a / (2.0 * z * tol)) ** (1.0 / (a + 1.0)) if lip > 0 else 1.0
    m = int(math.ceil(max(start, m_conv + 1, m_tol, 2)))
    m = max(min(m, MAX_ZIPF_HEAD), start, int(math.ceil(m_conv)) + 1)
    head, mag = _head_sum(law, f, start, m) if m > start else (0.0, 0.0)

    p_m = m ** (-a) / z
    gm1, gm = (float(x) for x in f(np.array([(m - 1.0) ** (-a) / z, p_m])))
    bound = abs(gm1 - gm) / 8.0
    # decreasing g (f increasing in p) is convex past the cutoff
    sign = 1.0 if gm1 >= gm else -1.0

    # int_M^inf f(pi(x)) dx = g Z^-g pi_M^(1-g)/(1-g) * int_0^1 f(p)/p dv,  p = pi_M v^(1/(1-g))
    expo = 1.0 / (1.0 - g)

    def integrand(v):
        p = p_m * v**expo
        out = np.empty_like(v)
        pos = p > 0
        out[pos] = f(p[pos]) / p[pos]
        if not np.all(pos):
            out[~pos] = float(f(np.array([p_m * 1e-300]))[0]) / (p_m * 1e-300)
        return out

    pref = g * z ** (-g) * p_m ** (1.0 - g) / (1.0 - g)
    qtol = 0.1 * tol / max(pref, 1e-300)
    ival, ierr = integrate(integrand, 0.0, 1.0, tol=qtol)
    tail = pref * ival + 0.5 * gm + sign * bound / 2.0
    err = pref * ierr + bound / 2.0 + 4 * _EPS * (mag + abs(tail))
    return CertifiedValue(head + tail, err)
