"""Rate functions for the distinct count.

``lambda_gamma`` is the limiting scaled cumulant generating function

    Lambda_g(l) = -l + g / Gamma(1-g) * int_0^inf log[1 + (e^l - 1)(1 - e^-s)] s^(-1-g) ds,

available by quadrature for every real ``l`` and by a power series in
``1 - e^l`` when ``l < log 2``.  Its convex conjugate is the large-deviation
rate of ``R_n / mu(n) - 1``; ``mdp_rate`` is the Gaussian-scale rate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from .laws import DiscreteLaw
from .moments import mu
from .quadrature import integrate
from .series import certified_sum

LOG2 = math.log(2.0)
MAX_SERIES_TERMS = 60
LAMBDA_BRACKET_LIMIT = 50.0


class RateFunctionDomainError(ValueError):
    """Argument outside the domain where the requested evaluation is defined."""


class SeriesCancellationError(ArithmeticError):
    """The series path cannot deliver a trustworthy value at this argument."""


@dataclass(frozen=True)
class RateFnSample:
    gamma: float
    lam: float
    value: float
    method: str  # "quadrature" | "series" | "closed_form_1regular"
    est_error: float


@dataclass(frozen=True)
class ConjugateSample:
    gamma: float
    x: float
    value: float
    argmax_lambda: float
    converged: bool


def _check_gamma(gamma):
    if not (0.0 < gamma < 1.0):
        raise RateFunctionDomainError(f"gamma must lie in the open interval (0,1), got {gamma!r}")


def _tail_cutoff(c: float, tol: float) -> float:
    # integrands below decay like c * e^{-s} * s^{-1-g}
    return max(40.0, math.log(max(c, 1.0) / tol) + 5.0)


def _two_piece(gamma, kernel, cutoff, tol):
    """``int_0^cutoff kernel(s) s^(-1-g) ds`` where ``kernel(s) ~ c s`` near 0.

    On ``[0, 1]`` substitute ``s = v^(1/(1-g))``, which turns
    ``kernel(s) s^(-1-g) ds`` into ``kernel(s)/s * dv/(1-g)``.
    """
    expo = 1.0 / (1.0 - gamma)

    def near(v):
        s = v**expo
        out = np.empty_like(v)
        pos = s > 0
        out[pos] = kernel(s[pos]) / s[pos]
        if not np.all(pos):
            tiny = np.array([1e-300])
            out[~pos] = kernel(tiny)[0] / tiny[0]
        return out / (1.0 - gamma)

    def far(s):
        return kernel(s) * s ** (-1.0 - gamma)

    v1, e1 = integrate(near, 0.0, 1.0, tol=tol / 2, breakpoints=(1e-6, 1e-3, 0.1))
    v2, e2 = integrate(far, 1.0, cutoff, tol=tol / 2, breakpoints=(2.0, 5.0, 10.0, 20.0))
    return v1 + v2, e1 + e2


def lambda_gamma_integral(gamma: float, lam: float, tol: float = 1e-12) -> RateFnSample:
    """``Lambda_gamma(lam)`` by quadrature.

    The linear part is taken out with the identity
    ``g/Gamma(1-g) * int (1 - e^-s) s^(-1-g) ds = 1``, leaving the kernel
    ``log1p(u p) - lam p`` (``u = e^lam - 1``, ``p = 1 - e^-s``), which is
    ``O(s)`` at 0 and decays like ``e^-s`` at infinity.  The remainder past
    the cutoff is bounded analytically.
    """
    _check_gamma(gamma)
    if not math.isfinite(lam):
        raise RateFunctionDomainError("lam must be finite")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if lam == 0:
        return RateFnSample(gamma, 0.0, 0.0, "quadrature", 0.0)
    u = math.expm1(lam)
    a = -math.expm1(-lam)  # 1 - e^{-lam}

    def kernel(s):
        p = -np.expm1(-s)
        return np.log1p(u * p) - lam * p

    c = abs(a) + abs(lam)
    cutoff = _tail_cutoff(c, tol)
    pref = gamma / math.gamma(1.0 - gamma)
    val, err = _two_piece(gamma, kernel, cutoff, tol / pref)
    # |log1p(-a e^-s) + lam e^-s| <= (|a|/(1-|a|e^-S) + |lam|) e^-s past S
    q = abs(a) * math.exp(-cutoff)
    remainder = (abs(a) / (1.0 - q) + abs(lam)) * math.exp(-cutoff) * cutoff ** (-1.0 - gamma) / (1.0 + gamma)
    return RateFnSample(gamma, lam, pref * val, "quadrature", pref * (err + remainder))


def lambda_gamma_prime(gamma: float, lam: float, tol: float = 1e-12) -> tuple[float, float]:
    """``Lambda_gamma'(lam)`` differentiated under the integral sign.

    ``Lambda' = g/Gamma(1-g) * int u p e^-s / (1 + u p) s^(-1-g) ds``; it runs
    from -1 (lam -> -inf) to +inf and is 0 at lam = 0.
    """
    _check_gamma(gamma)
    if lam == 0:
        return 0.0, 0.0
    u = math.expm1(lam)

    def kernel(s):
        p = -np.expm1(-s)
        return u * p * np.exp(-s) / (1.0 + u * p)

    pref = gamma / math.gamma(1.0 - gamma)
    cutoff = _tail_cutoff(abs(u), tol)
    val, err = _two_piece(gamma, kernel, cutoff, tol / pref)
    val_full = pref * val
    remainder = pref * abs(u) * math.exp(-cutoff) / max(1.0 + min(u, 0.0), 1e-300)
    return val_full, pref * err + remainder


def lambda_gamma_second(gamma: float, lam: float, tol: float = 1e-12) -> float:
    """``Lambda_gamma''(lam) = g/Gamma(1-g) * int e^lam p e^-s / (1 + u p)^2 s^(-1-g) ds > 0``."""
    _check_gamma(gamma)
    u = math.expm1(lam)
    el = math.exp(lam)

    def kernel(s):
        p = -np.expm1(-s)
        return el * p * np.exp(-s) / (1.0 + u * p) ** 2

    pref = gamma / math.gamma(1.0 - gamma)
    val, _ = _two_piece(gamma, kernel, _tail_cutoff(el, tol), tol / pref)
    return pref * val


@lru_cache(maxsize=64)
def _series_coefficients(gamma: float, n_terms: int) -> tuple[float, ...]:
    """``c_n = sum_{k=1}^n (-1)^k C(n-1, k-1) / k^(1-g)`` for ``n = 1..n_terms``.

    The alternating binomial sums lose about ``n log10(2)`` digits to
    cancellation, so they are accumulated in extended precision and only
    the result is rounded to double.
    """
    digits = 30 + int(n_terms * math.log10(2.0)) + 1
    coeffs = []
    with mpmath.workdps(digits):
        g = mpmath.mpf(gamma)
        powers = [mpmath.power(k, g - 1) for k in range(1, n_terms + 1)]
        for n in range(1, n_terms + 1):
            acc = mpmath.mpf(0)
            for k in range(1, n + 1):
                term = mpmath.binomial(n - 1, k - 1) * powers[k - 1]
                acc += -term if k % 2 else term
            coeffs.append(float(acc))
    return tuple(coeffs)


def lambda_gamma_series(gamma: float, lam: float, n_terms: int = MAX_SERIES_TERMS) -> RateFnSample:
    """``Lambda_gamma(lam) = -lam + sum_n (1 - e^lam)^n c_n`` for ``lam < log 2``.

    ``est_error`` is the last included term times the geometric cushion
    ``1 / (1 - |1 - e^lam|)``.  If the partial sums swing more than 1e6
    times the result scale ``max(|value|, |1 - e^lam|)``, the quadrature
    value is returned instead (with a warning).
    """
    _check_gamma(gamma)
    if not (lam < LOG2 - 1e-6):
        raise RateFunctionDomainError(f"series needs lam < log 2, got {lam!r}")
    if not 1 <= n_terms <= MAX_SERIES_TERMS:
        raise SeriesCancellationError(f"n_terms must be in [1, {MAX_SERIES_TERMS}], got {n_terms}")
    w = -math.expm1(lam)  # 1 - e^lam
    if abs(w) > 0.95:
        raise SeriesCancellationError(f"|1 - e^lam| = {abs(w):.3f} > 0.95; series too slow here")
    if lam == 0:
        return RateFnSample(gamma, 0.0, 0.0, "series", 0.0)
    coeffs = _series_coefficients(float(gamma), n_terms)
    terms = [-lam]
    running = 0.0
    swing = 0.0
    wn = 1.0
    for c in coeffs:
        wn *= w
        terms.append(wn * c)
        running += wn * c
        swing = max(swing, abs(running))
    value = math.fsum(terms)
    last = abs(terms[-1])
    est = last / (1.0 - abs(w)) + 4 * np.finfo(float).eps * swing
    # the -lam + (e^lam - 1) cancellation near 0 is inherent (the closed form
    # loses the same digits), so the scale is the leading term, not the result
    scale = max(abs(value), abs(w))
    if swing > 1e6 * scale:
        warnings.warn(f"series partial sums swing {swing / abs(value):.1e}x the result at lam={lam}; "
                      "using quadrature", RuntimeWarning, stacklevel=2)
        return lambda_gamma_integral(gamma, lam)
    return RateFnSample(gamma, lam, value, "series", est)


def lambda_one(lam: float) -> float:
    """One-regular closed form ``e^lam - 1 - lam``."""
    return math.expm1(lam) - lam


def mdp_rate(gamma: float, x: float) -> float:
    """Moderate-deviation rate ``x^2 / (2 (2^g - 1))``; ``x^2 / 2`` at ``g = 1``."""
    if not (0.0 < gamma <= 1.0):
        raise RateFunctionDomainError(f"gamma must lie in (0,1], got {gamma!r}")
    if gamma == 1.0:
        return 0.5 * x * x
    return x * x / (2.0 * (2.0**gamma - 1.0))


def lambda_gamma(gamma: float, lam: float, tol: float = 1e-12) -> RateFnSample:
    """Best available evaluation; ``gamma = 1`` gives the closed form."""
    if gamma == 1.0:
        return RateFnSample(1.0, lam, lambda_one(lam), "closed_form_1regular", 0.0)
    return lambda_gamma_integral(gamma, lam, tol)


def legendre_transform(gamma: float, x: float, tol: float = 1e-10) -> ConjugateSample:
    """``sup_lam {lam x - Lambda_gamma(lam)}`` for ``x > -1``.

    Solves ``Lambda'(lam) = x`` by a safeguarded Newton iteration inside a
    bracket that is grown geometrically; gives up (``converged=False``) once
    the bracket would pass ``|lam| = 50``.
    """
    if not x > -1.0:
        raise RateFunctionDomainError(f"the rate is +inf for x <= -1 (got x={x!r})")
    if gamma == 1.0:
        lam = math.log1p(x)
        return ConjugateSample(1.0, x, lam * x - lambda_one(lam), lam, True)
    _check_gamma(gamma)
    if x == 0.0:
        return ConjugateSample(gamma, 0.0, 0.0, 0.0, True)
    qtol = min(1e-12, tol * 1e-2)

    def dfun(lam):
        return lambda_gamma_prime(gamma, lam, qtol)[0] - x

    # Lambda' is increasing with Lambda'(0) = 0, so the root has the sign of x
    if x > 0:
        lo, hi = 0.0, 1.0
        while dfun(hi) < 0:
            lo, hi = hi, 2.0 * hi
            if hi > LAMBDA_BRACKET_LIMIT:
                return _conjugate_at(gamma, x, lo, False)
    else:
        lo, hi = -1.0, 0.0
        while dfun(lo) > 0:
            lo, hi = 2.0 * lo, lo
            if lo < -LAMBDA_BRACKET_LIMIT:
                return _conjugate_at(gamma, x, hi, False)

    lam = 0.5 * (lo + hi)
    for _ in range(200):
        d = dfun(lam)
        if d > 0:
            hi = lam
        else:
            lo = lam
        step = d / lambda_gamma_second(gamma, lam, qtol)
        cand = lam - step
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        if abs(cand - lam) <= tol * max(1.0, abs(lam)) or hi - lo <= tol:
            lam = cand
            break
        lam = cand
    return _conjugate_at(gamma, x, lam, True)


def _conjugate_at(gamma, x, lam, converged):
    value = lam * x - lambda_gamma_integral(gamma, lam).value
    return ConjugateSample(gamma, x, max(value, 0.0), lam, converged)


def finite_t_cgf(law: DiscreteLaw, t: float, lam: float, tol: float = 1e-9) -> float:
    """Scaled finite-t CGF ``Lambda_t(lam mu(t)) / mu(t)`` of the Poissonized count.

    Equals ``-lam + (1/mu(t)) sum_i log[1 + (e^lam - 1)(1 - e^{-t pi_i})]``;
    ``tol`` bounds the absolute error of the returned value.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if lam == 0:
        return 0.0
    m = mu(law, t, tol=1e-12 * max(1.0, t))
    u = math.expm1(lam)
    # log(1 + u q) is Lipschitz in q with constant |u| / min(1, e^lam)
    denom = min(1.0, math.exp(lam))
    lip = abs(u) * t / denom
    ycap = 0.5 / (1.0 + abs(u) / denom)

    def f(p):
        q = -np.expm1(-t * p)
        arg = u * q
        assert np.all(arg > -1.0)
        return np.log1p(arg)

    s = certified_sum(law, f, lip=lip, scale=t, ycap=ycap, tol=0.5 * tol * m.value)
    return -lam + s.value / m.value
