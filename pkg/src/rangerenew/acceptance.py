"""The acceptance suite as plain functions.

Used by ``tests/test_acceptance.py`` and by ``rangerenew report-all``.  Each
``criterion_k`` returns a :class:`CriterionResult`; stochastic criteria also
record sha256 digests of their simulated batches, which criterion 12 compares
against a rerun with a different worker count.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .laws import make_finite, make_geometric, make_zipf
from .moments import (delta_n, exact_mean_Rn, exact_var_Rn, mu, mu_ddot, mu_dot,
                      poisson_chernoff_lower, poisson_chernoff_upper, sigma_sq)
from .ratefn import (lambda_gamma_integral, lambda_gamma_series, lambda_one,
                     legendre_transform)
from .verify import (brute_force_Rn, cgf_convergence_report, clt_report, coupling_report,
                     mdp_tail_report, mean_bounds_report)

DEFAULT_SEED = 20231107
FINITE_ORACLE_LAWS = (
    (0.5, 0.3, 0.2),
    (1.0,),
    (0.6, 0.4),
    (0.4, 0.3, 0.2, 0.1),
    (0.25, 0.25, 0.25, 0.25),
    (0.7, 0.1, 0.1, 0.1),
)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    gating: bool
    detail: str
    seconds: float = 0.0
    digests: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        kind = "" if self.gating else " [non-gating]"
        return f"criterion {self.number:2d} {tag}{kind}: {self.title} ({self.seconds:.1f}s) {self.detail}"

    def to_dict(self) -> dict:
        return dict(number=self.number, title=self.title, passed=self.passed, gating=self.gating,
                    detail=self.detail, seconds=round(self.seconds, 3), digests=self.digests)


def _timed(number, title, gating=True):
    def wrap(fn):
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            passed, detail, digests = fn(*args, **kwargs)
            return CriterionResult(number, title, bool(passed), gating, detail,
                                   time.perf_counter() - t0, digests or {})
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


@_timed(1, "oracle equivalence on finite laws")
def criterion_1():
    worst = 0.0
    for w in FINITE_ORACLE_LAWS:
        law = make_finite(w)
        for n in range(1, 7):
            bf = brute_force_Rn(law, n)
            worst = max(worst, abs(bf.mean - exact_mean_Rn(law, n).value),
                        abs(bf.variance - exact_var_Rn(law, n).value))
    law = make_finite((0.5, 0.3, 0.2))
    fixtures = [
        abs(exact_mean_Rn(law, 2).value - 1.62),
        abs(delta_n(law, 1).value - 0.62),
        abs(exact_var_Rn(law, 1).value - 0.0),
    ]
    ok = worst <= 1e-12 and max(fixtures) <= 1e-12
    return ok, f"max |brute - formula| = {worst:.2e}, fixture error = {max(fixtures):.2e}", None


def lemma_inequality_violations(law, t_grid, eps_grid=(0.1, 0.25, 0.5), tol=1e-12):
    """Every inequality that fails by more than the certified errors."""
    bad = []
    vals = {}
    for t in t_grid:
        m, s2, d, dd = mu(law, t, tol), sigma_sq(law, t, tol), mu_dot(law, t, tol), mu_ddot(law, t, tol)
        vals[t] = d

        def check(name, lhs, rhs):
            if lhs > rhs:
                bad.append(f"{law.spec} t={t:g}: {name} ({lhs:.6g} > {rhs:.6g})")

        check("sigma^2/t <= mu_dot", s2.lo / t, d.hi)
        check("mu_dot <= mu/t", d.lo, m.hi / t)
        check("-mu_ddot <= 2 mu/t^2", -dd.hi, 2 * m.hi / t**2)
        check("sigma^2 <= mu", s2.lo, m.hi)
        check("mu <= t", m.lo, t)
        for e in eps_grid:
            check(f"mu_dot <= (1/eps+2)(sigma^2/t)^(1-eps), eps={e}",
                  d.lo, (1 / e + 2) * (s2.hi / t) ** (1 - e))
            check(f"-mu_ddot <= mu_dot^(1-eps)/(e eps t), eps={e}",
                  -dd.hi, d.hi ** (1 - e) / (math.e * e * t))
    ts = sorted(t_grid)
    for i, s in enumerate(ts):
        for t in ts[i + 1:]:
            lhs, rhs = vals[s].lo, max(vals[t].hi, 0.0) ** (s / t)
            if lhs > rhs:
                bad.append(f"{law.spec}: mu_dot({s:g}) <= mu_dot({t:g})^(s/t) ({lhs:.6g} > {rhs:.6g})")
    return bad


@_timed(2, "derivative and variance inequalities")
def criterion_2():
    t_grid = [10.0**k for k in range(1, 7)]
    bad = []
    laws = [make_zipf(g) for g in (0.3, 0.5, 0.7)] + [make_geometric(0.5)]
    for law in laws:
        bad += lemma_inequality_violations(law, t_grid)
    return not bad, ("all hold" if not bad else "; ".join(bad[:5])), None


@_timed(3, "mean bounds on Zipf gamma=0.5")
def criterion_3():
    rep = mean_bounds_report(make_zipf(0.5), [10, 100, 1000])
    ratios = ", ".join(f"n={r['n']}: {r['mean'] / r['mu']:.6f}" for r in rep.rows)
    return rep.passed, f"E R_n / mu(n): {ratios}", None


@_timed(4, "asymptotics of mu and sigma^2 at t=1e6")
def criterion_4():
    law = make_zipf(0.5)
    t = 1e6
    m = mu(law, t).value
    r1 = m / math.sqrt(6 * t / math.pi)
    r2 = sigma_sq(law, t).value / m
    target = math.sqrt(2) - 1
    ok = 0.99 <= r1 <= 1.01 and abs(r2 / target - 1) <= 0.02
    return ok, f"mu/sqrt(6t/pi) = {r1:.6f}, sigma^2/mu = {r2:.6f} (target {target:.6f})", None


@_timed(5, "series and quadrature agree")
def criterion_5():
    worst = 0.0
    for g in (0.3, 0.5, 0.7):
        for lam in (-1.0, -0.5, 0.25, 0.5):
            worst = max(worst, abs(lambda_gamma_series(g, lam).value - lambda_gamma_integral(g, lam).value))
    zero = max(abs(lambda_gamma_integral(g, 0.0).value) for g in (0.3, 0.5, 0.7))
    h = 1e-3
    curv = 0.0
    for g in (0.3, 0.5, 0.7):
        fd = (lambda_gamma_integral(g, h).value - 2 * lambda_gamma_integral(g, 0.0).value
              + lambda_gamma_integral(g, -h).value) / h**2
        curv = max(curv, abs(fd - (2**g - 1)))
    one_term = all(lambda_gamma_series(g, lam, 1).value == lambda_one(lam)
                   for g in (0.3, 0.5, 0.7) for lam in (-2.0, -0.5, -1e-3, 0.1, 0.5, 0.6))
    ok = worst <= 1e-8 and zero <= 1e-12 and curv <= 1e-4 and one_term
    return ok, (f"max |series - quad| = {worst:.2e}, |Lambda(0)| = {zero:.1e}, "
                f"curvature error = {curv:.2e}, one-term exact = {one_term}"), None


@_timed(6, "Legendre transform")
def criterion_6():
    msgs, ok = [], True
    xs = np.round(np.arange(-0.5, 2.0 + 1e-9, 0.05), 10)
    for g in (0.3, 0.5, 0.7):
        at0 = legendre_transform(g, 0.0)
        vals = np.array([legendre_transform(g, float(x)).value for x in xs])
        second = np.min(vals[2:] - 2 * vals[1:-1] + vals[:-2])
        ratios = [legendre_transform(g, x).value * 2 * (2**g - 1) / x**2 for x in (-0.02, 0.02)]
        ok &= abs(at0.value) <= 1e-8 and abs(at0.argmax_lambda) <= 1e-8
        ok &= second >= -1e-6 and all(0.95 <= r <= 1.05 for r in ratios)
        msgs.append(f"g={g}: min 2nd diff {second:.2e}, ratios {ratios[0]:.4f}/{ratios[1]:.4f}")
    return ok, "; ".join(msgs), None


@_timed(7, "finite-t CGF converges")
def criterion_7():
    lams = [float(x) for x in np.round(np.arange(-2.0, 1.0 + 1e-9, 0.1), 10)]
    rep = cgf_convergence_report(make_zipf(0.5), lams, (1e4, 1e6, 1e8))
    return rep.passed, "; ".join(rep.diagnostics[:3]), None


@_timed(8, "CLT at desk scale")
def criterion_8(seed=DEFAULT_SEED, workers=None):
    rep = clt_report(make_zipf(0.5), 1e5, 10**4, seed, workers=workers)
    r = rep.rows[0]
    ok = r["ks"] <= 0.05 and r["ks"] <= r["envelope"]
    return ok, f"KS = {r['ks']:.4f}, envelope = {r['envelope']:.4f}", {"clt": rep.batch_digest}


def poisson_tail_exact(lam, x, upper):
    """``P(X >= x)`` (upper) or ``P(X <= x)`` by summing the pmf directly."""
    if upper:
        k = np.arange(x, x + int(50 * math.sqrt(lam) + 200))
    else:
        k = np.arange(0, x + 1)
    return math.fsum(np.exp(-lam + k * math.log(lam) - gammaln(k + 1.0)).tolist())


@_timed(9, "Poisson Chernoff bounds dominate")
def criterion_9():
    bad = 0
    checked = 0
    for lam in (0.5, 1.0, 5.0, 20.0):
        top = int(math.floor(lam + 20 * math.sqrt(lam)))
        for x in range(0, top + 1):
            if x > lam:
                bound, exact = poisson_chernoff_upper(lam, x), poisson_tail_exact(lam, x, True)
            elif x < lam:
                bound, exact = poisson_chernoff_lower(lam, x), poisson_tail_exact(lam, x, False)
            else:
                continue
            checked += 1
            # x = 0 below the mean is an equality case: allow rounding only
            bad += bound < exact * (1 - 1e-13)
    fixture = poisson_chernoff_upper(1.0, 2)
    ok = bad == 0 and abs(fixture - math.e / 4) <= 1e-15 and fixture >= poisson_tail_exact(1.0, 2, True)
    return ok, f"{checked} (lam, x) pairs, {bad} violations; bound(1,2) = {fixture:.6f}", None


@_timed(10, "coupling negligibility", gating=False)
def criterion_10(seed=DEFAULT_SEED, workers=None):
    rep = coupling_report(make_zipf(0.5), 1e5, 1000, seed, workers=workers)
    f1 = [r["freq"] for r in rep.rows if r["eps"] == 1.0][0]
    return rep.passed, f"P(|R*-R| >= sigma_n) = {f1:.4f}; {rep.diagnostics[0]}", {"coupling": rep.batch_digest}


@_timed(11, "MDP tail diagnostic", gating=False)
def criterion_11(seed=DEFAULT_SEED, workers=None):
    rep = mdp_tail_report(make_zipf(0.5), 1e4, [0.5], 10**6, seed, workers=workers)
    r = rep.rows[0]
    return rep.passed, (f"P(Z >= 0.5) = {r['prob']:.4f} ({r['hits']} hits), "
                        f"ratio = {r['ratio']:.3f}"), {"mdp": rep.batch_digest}


STOCHASTIC = {8: criterion_8, 10: criterion_10, 11: criterion_11}


@_timed(12, "determinism across worker counts")
def criterion_12(first: dict, seed=DEFAULT_SEED, workers=2):
    """Rerun the stochastic criteria with ``workers`` and compare digests to ``first``."""
    again = {}
    for fn in STOCHASTIC.values():
        again.update(fn(seed=seed, workers=workers).digests)
    same = bool(first) and set(again) == set(first) and all(again[k] == first[k] for k in first)
    return same, ", ".join(f"{k}: {'same' if again.get(k) == v else 'DIFFERENT'}" for k, v in first.items()), again


CRITERIA: dict[int, Callable] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11,
}


def run_all(seed: int = DEFAULT_SEED, workers: tuple = (1, 2),
            progress: Optional[Callable[[CriterionResult], None]] = None) -> list:
    results, digests = [], {}
    for k, fn in CRITERIA.items():
        res = fn(seed=seed, workers=workers[0]) if k in STOCHASTIC else fn()
        digests.update(res.digests)
        results.append(res)
        if progress:
            progress(res)
    res = criterion_12(digests, seed=seed, workers=workers[1])
    results.append(res)
    if progress:
        progress(res)
    return results
