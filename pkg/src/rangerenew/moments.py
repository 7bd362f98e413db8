"""Moments of the distinct count, exact and Poissonized.

``mu(t) = sum_i (1 - exp(-t pi_i))`` is the mean of the Poissonized count
``R*_t`` and ``sigma_sq(t) = mu(2t) - mu(t)`` its variance.  ``E R_n`` and
``Var R_n`` are the fixed-``n`` counterparts.  Every infinite sum comes back
as a :class:`CertifiedValue`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .laws import DiscreteLaw, RegularProfile, regular_profile
from .series import CertifiedValue, certified_sum

DEFAULT_TOL = 1e-9
DEFAULT_DELTA_PAIRS = 20_000


def _check_t(t, tol):
    if t < 0 or not math.isfinite(t):
        raise ValueError(f"t must be finite and >= 0, got {t!r}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol!r}")


def mu(law: DiscreteLaw, t: float, tol: float = DEFAULT_TOL) -> CertifiedValue:
    _check_t(t, tol)
    if t == 0:
        return CertifiedValue(0.0, 0.0)
    # 1 - e^{-x} <= x bounds the tail
    return certified_sum(law, lambda p: -np.expm1(-t * p), lip=t, scale=t, ycap=1.0, tol=tol)


def sigma_sq(law: DiscreteLaw, t: float, tol: float = DEFAULT_TOL) -> CertifiedValue:
    """``mu(2t) - mu(t)``, the variance of the Poissonized count."""
    _check_t(t, tol)
    if t == 0:
        return CertifiedValue(0.0, 0.0)
    # sum of e^{-t p}(1 - e^{-t p}) directly, which avoids the cancellation of mu(2t) - mu(t)
    return certified_sum(law, lambda p: -np.expm1(-t * p) * np.exp(-t * p),
                         lip=t, scale=t, ycap=0.25, tol=tol)


def mu_dot(law: DiscreteLaw, t: float, tol: float = DEFAULT_TOL) -> CertifiedValue:
    _check_t(t, tol)
    return certified_sum(law, lambda p: p * np.exp(-t * p), lip=1.0, scale=t, ycap=0.25, tol=tol)


def mu_ddot(law: DiscreteLaw, t: float, tol: float = DEFAULT_TOL) -> CertifiedValue:
    _check_t(t, tol)
    # p^2 e^{-tp} <= p / (e t) for t > 0; <= p * pi_1 at t = 0
    lip = 1.0 / (math.e * t) if t > 0 else 1.0
    return -certified_sum(law, lambda p: p * p * np.exp(-t * p), lip=lip, scale=t, ycap=0.25, tol=tol)


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"n must be an integer >= 1, got {n!r}")
    return int(n)


def _one_minus_pow(n):
    # 1 - (1 - p)^n without cancellation
    def f(p):
        with np.errstate(divide="ignore"):  # p = 1 gives log1p(-1) = -inf, which is fine
            return -np.expm1(n * np.log1p(-p))
    return f


def exact_mean_Rn(law: DiscreteLaw, n: int, tol: float = DEFAULT_TOL) -> CertifiedValue:
    """``E R_n = sum_i [1 - (1 - pi_i)^n]``."""
    n = _check_n(n)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if n == 1:
        return CertifiedValue(1.0, 0.0)
    return certified_sum(law, _one_minus_pow(n), lip=float(n), scale=float(n), ycap=0.5, tol=tol)


def _pair_terms(pi_i, pi_j, n):
    """``(1-pi_i)^n (1-pi_j)^n - (1-pi_i-pi_j)^n`` for broadcast arrays.

    Written as ``A * (1 - (1 - x)^n)`` with ``A = [(1-pi_i)(1-pi_j)]^n`` and
    ``x = pi_i pi_j / ((1-pi_i)(1-pi_j))``; ``x = 1`` exactly when
    ``pi_i + pi_j = 1``, where the second power vanishes.
    """
    with np.errstate(divide="ignore"):
        li = np.log1p(-pi_i)
        lj = np.log1p(-pi_j)
        x = pi_i * pi_j / ((1.0 - pi_i) * (1.0 - pi_j))
        one_minus = -np.expm1(n * np.log1p(-np.minimum(x, 1.0)))
    return np.exp(n * (li + lj)) * one_minus


def delta_n(law: DiscreteLaw, n: int, K: Optional[int] = None) -> CertifiedValue:
    """``Delta(n) = 2 sum_{j>i} [(1-pi_i)^n (1-pi_j)^n - (1-pi_i-pi_j)^n]``.

    Pairs with ``j <= K`` are summed; the rest are bounded by
    ``2n (sum_{j>K} a_j)(sum_i a_i)`` with ``a_i = pi_i (1-pi_i)^(n-1)``, using
    ``x^n - y^n <= n (x - y) x^(n-1)``.  Finite laws default to their full
    support, so the result is exact up to rounding.

    Each summand is ``A_i A_j [1 - (1 - y_i y_j)^n]`` with ``A = (1-pi)^n`` and
    ``y = pi / (1 - pi)``.  Rows with ``n y_i^2 > 0.01`` are summed pair by
    pair; the remaining block uses the binomial expansion of the bracket,
    which separates into power sums over single indices.  That expansion
    alternates with shrinking terms, so the first omitted term bounds it.
    """
    n = _check_n(n)
    if law.support_size == 1:
        return CertifiedValue(0.0, 0.0)  # no pairs
    if K is None:
        K = law.support_size if law.support_size is not None else DEFAULT_DELTA_PAIRS
    if K < 2:
        raise ValueError("K must be >= 2")
    if law.support_size is not None:
        K = min(K, law.support_size)
    p = law.pmf_range(1, K + 1)
    with np.errstate(divide="ignore"):
        log_y = np.log(p) - np.log1p(-p)
    log_a = n * np.log1p(-p)
    j0 = int(np.count_nonzero(n * np.exp(2 * log_y) > 0.01))
    eps = np.finfo(float).eps

    parts, mags = [], []
    for i in range(min(j0, K - 1)):
        terms = _pair_terms(p[i], p[i + 1:], n)
        parts.append(float(np.sum(terms)))
        mags.append(float(np.sum(terms)))  # terms are >= 0
    err = 8 * eps * math.fsum(mags)

    if K - j0 >= 2:
        la, ly = log_a[j0:], log_y[j0:]
        coef = 1.0
        k = 1
        while True:
            coef *= (n - k + 1) / k  # C(n, k)
            w = np.exp(la + k * ly)
            # sum_{i<j} w_i w_j without cancellation
            pair = float(np.dot(w[1:], np.cumsum(w)[:-1]))
            if k > n or coef * pair <= 1e-17 * math.fsum(parts + [1e-300]) or k > 60:
                if k <= n:
                    err += coef * pair  # first omitted term
                break
            parts.append((-1.0) ** (k + 1) * coef * pair)
            err += 8 * eps * coef * pair
            k += 1

    head = 2.0 * math.fsum(parts)
    err *= 2.0
    if law.support_size is not None and K >= law.support_size:
        return CertifiedValue(head, err)
    # a_i <= pi_i e^{-(n-1) pi_i}
    f = lambda q: q * np.exp(-(n - 1) * q)
    a_all = certified_sum(law, f, lip=1.0, scale=n - 1, ycap=0.25, tol=1e-12)
    a_tail = certified_sum(law, f, lip=1.0, scale=n - 1, ycap=0.25, tol=1e-12, start=K + 1)
    bound = 2.0 * n * a_all.hi * a_tail.hi
    return CertifiedValue(head + 0.5 * bound, 0.5 * bound + err)


def _delta_pairwise(law: DiscreteLaw, n: int, K: int) -> float:
    """Plain O(K^2) pair sum; reference path for tests."""
    p = law.pmf_range(1, K + 1)
    i, j = np.triu_indices(K, k=1)
    return 2.0 * math.fsum(_pair_terms(p[i], p[j], n).tolist())


def exact_var_Rn(law: DiscreteLaw, n: int, tol: float = DEFAULT_TOL, K: Optional[int] = None) -> CertifiedValue:
    """``Var R_n = E R_{2n} - E R_n - Delta(n)``."""
    n = _check_n(n)
    if n == 1:
        return CertifiedValue(0.0, 0.0)
    return exact_mean_Rn(law, 2 * n, tol / 2) - exact_mean_Rn(law, n, tol / 2) - delta_n(law, n, K)


def _check_profile(profile: RegularProfile):
    if profile is None or profile.zeta is None or not (0.0 < profile.gamma < 1.0):
        raise ValueError("asymptotic formulas need a regular profile with gamma in (0,1)")


def asymptotic_mu(profile: RegularProfile, t: float) -> float:
    """``Gamma(1-gamma) zeta(t)``."""
    _check_profile(profile)
    return math.gamma(1.0 - profile.gamma) * profile.zeta(t)


def asymptotic_sigma_sq(profile: RegularProfile, t: float) -> float:
    """``(2^gamma - 1) Gamma(1-gamma) zeta(t)``."""
    return (2.0**profile.gamma - 1.0) * asymptotic_mu(profile, t)


def _log_chernoff(lam, x):
    # log of e^{-lam} (e lam / x)^x, with 0^0 = 1
    if x == 0:
        return -lam
    return -lam + x * (1.0 + math.log(lam) - math.log(x))


def poisson_chernoff_upper(lam: float, x: float) -> float:
    """Bound on ``P(X >= x)`` for ``X ~ Poisson(lam)``, valid for ``x > lam``."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    if not x > lam:
        raise ValueError(f"upper Chernoff bound needs x > lam (x={x!r}, lam={lam!r})")
    return math.exp(_log_chernoff(lam, x))


def poisson_chernoff_lower(lam: float, x: float) -> float:
    """Bound on ``P(X <= x)`` for ``X ~ Poisson(lam)``, valid for ``0 <= x < lam``."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    if not 0 <= x < lam:
        raise ValueError(f"lower Chernoff bound needs 0 <= x < lam (x={x!r}, lam={lam!r})")
    return math.exp(_log_chernoff(lam, x))


@dataclass(frozen=True)
class MomentReportRow:
    t_or_n: float
    mu: CertifiedValue
    sigma_sq: CertifiedValue
    mu_dot: CertifiedValue
    mu_ddot: CertifiedValue
    exact_mean_Rn: Optional[CertifiedValue] = None
    exact_var_Rn: Optional[CertifiedValue] = None
    asym_mu: Optional[float] = None
    asym_sigma_sq: Optional[float] = None


def moment_row(law: DiscreteLaw, t: float, tol: float = DEFAULT_TOL, exact: bool = True,
               delta_pairs: Optional[int] = None) -> MomentReportRow:
    integral = float(t).is_integer() and t >= 1
    prof = regular_profile(law)
    asym = prof is not None and prof.zeta is not None
    return MomentReportRow(
        t_or_n=t,
        mu=mu(law, t, tol),
        sigma_sq=sigma_sq(law, t, tol),
        mu_dot=mu_dot(law, t, tol),
        mu_ddot=mu_ddot(law, t, tol),
        exact_mean_Rn=exact_mean_Rn(law, int(t), tol) if exact and integral else None,
        exact_var_Rn=exact_var_Rn(law, int(t), tol, delta_pairs) if exact and integral else None,
        asym_mu=asymptotic_mu(prof, t) if asym else None,
        asym_sigma_sq=asymptotic_sigma_sq(prof, t) if asym else None,
    )
