import math

import mpmath
import numpy as np
import pytest

from rangerenew.laws import make_factorial_gap, make_finite, make_geometric, make_zipf
from rangerenew.quadrature import QuadratureError, integrate
from rangerenew.series import CertifiedValue, certified_sum


def test_integrate_smooth_and_singular():
    v, e = integrate(np.exp, 0.0, 1.0)
    assert abs(v - (math.e - 1)) <= max(e, 1e-14)
    # 1/sqrt(x) is integrable at 0; adaptive panels must concentrate there
    v, e = integrate(lambda x: 1 / np.sqrt(x), 0.0, 1.0, tol=1e-9, max_panels=20000)
    assert abs(v - 2.0) <= 1e-8


def test_integrate_budget_exhaustion():
    with pytest.raises(QuadratureError):
        integrate(lambda x: np.sin(1 / x), 1e-8, 1.0, tol=1e-14, max_panels=20)


def test_certified_value_arithmetic():
    a = CertifiedValue(1.0, 0.1)
    b = CertifiedValue(2.0, 0.2)
    assert (a + b).abs_error == pytest.approx(0.3)
    assert (b - a).value == 1.0
    assert (-a).lo == -1.1
    assert a.scaled(-2).abs_error == pytest.approx(0.2)
    with pytest.raises(ValueError):
        CertifiedValue(0.0, -1.0)


def _mp_zipf_sum(gamma, f):
    z = mpmath.zeta(1 / mpmath.mpf(gamma))
    # Euler-Maclaurin; the default extrapolation misjudges these slowly decaying sums
    return mpmath.nsum(lambda i: f(i ** (-1 / mpmath.mpf(gamma)) / z), [1, mpmath.inf], method="e")


@pytest.mark.parametrize("gamma", [0.3, 0.5, 0.7])
@pytest.mark.parametrize("t", [1.0, 1e3, 1e6])
def test_zipf_sum_contains_high_precision_value(gamma, t):
    mpmath.mp.dps = 30
    law = make_zipf(gamma)
    got = certified_sum(law, lambda p: -np.expm1(-t * p), lip=t, scale=t, tol=1e-9)
    ref = float(_mp_zipf_sum(gamma, lambda p: 1 - mpmath.exp(-t * p)))
    assert abs(got.value - ref) <= got.abs_error + 1e-12 * ref
    assert got.abs_error <= 1e-8


def test_geometric_and_factgap_sums():
    g = make_geometric(0.5)
    got = certified_sum(g, lambda p: p, lip=1.0, tol=1e-12)
    assert abs(got.value - 1.0) <= got.abs_error + 1e-15
    f = make_factorial_gap()
    got = certified_sum(f, lambda p: p, lip=1.0, tol=1e-12)
    assert abs(got.value - 1.0) <= got.abs_error + 1e-15


def test_start_offset_is_a_tail():
    law = make_zipf(0.5)
    full = certified_sum(law, lambda p: p, lip=1.0, tol=1e-12)
    tail = certified_sum(law, lambda p: p, lip=1.0, tol=1e-12, start=11)
    head = math.fsum(law.pmf_range(1, 11).tolist())
    assert abs(full.value - head - tail.value) <= full.abs_error + tail.abs_error + 1e-15
    fin = make_finite([0.5, 0.5])
    assert certified_sum(fin, lambda p: p, lip=1.0, start=3).value == 0.0
