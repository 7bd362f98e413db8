import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rangerenew.laws import make_finite, make_zipf
from rangerenew.ratefn import (RateFunctionDomainError, SeriesCancellationError, finite_t_cgf,
                               lambda_gamma, lambda_gamma_integral, lambda_gamma_prime,
                               lambda_gamma_second, lambda_gamma_series, lambda_one,
                               legendre_transform, mdp_rate)

# 40-digit mpmath quadrature of the defining integral, split at 1e-12 .. 60
LAMBDA_REF = {
    (0.5, -0.5): 0.0474483295242116360077672726106,
    (0.5, 0.25): 0.0135400500112102183993674404274,
    (0.3, -1.0): 0.1021250566741225893591553846937,
    (0.7, 0.5): 0.0881449259791118430347458796797,
    (0.5, 2.0): 1.21767096015866419247874454727,
}
# -1 + (1/mu(1)) sum log(1 + (e-1)(1 - e^{-pi_i})) for (0.5, 0.3, 0.2), 30 digits
THREE_POINT_CGF = 0.386180319077017305447402378502


@pytest.mark.parametrize("key", sorted(LAMBDA_REF))
def test_quadrature_against_reference(key):
    g, lam = key
    s = lambda_gamma_integral(g, lam)
    assert s.method == "quadrature"
    assert abs(s.value - LAMBDA_REF[key]) <= 1e-12
    assert s.est_error < 1e-11


def test_zero_is_exact():
    assert lambda_gamma_integral(0.5, 0.0).value == 0.0
    assert lambda_gamma_series(0.5, 0.0).value == 0.0


@pytest.mark.parametrize("g", [0.3, 0.5, 0.7])
@pytest.mark.parametrize("lam", [-1.0, -0.5, 0.25, 0.5])
def test_series_matches_quadrature(g, lam):
    s = lambda_gamma_series(g, lam)
    assert s.method == "series"
    assert abs(s.value - lambda_gamma_integral(g, lam).value) <= 1e-8


def test_series_with_forty_terms():
    assert abs(lambda_gamma_series(0.5, -0.5, 40).value - LAMBDA_REF[(0.5, -0.5)]) <= 1e-8


@given(g=st.floats(0.05, 0.95), lam=st.floats(-2.5, 0.65))
@settings(max_examples=60, deadline=None)
def test_one_term_series_is_lambda_one(g, lam):
    assert lambda_gamma_series(g, lam, 1).value == lambda_one(lam)


def test_series_domain():
    with pytest.raises(RateFunctionDomainError):
        lambda_gamma_series(0.5, math.log(2))
    with pytest.raises(SeriesCancellationError):
        lambda_gamma_series(0.5, -4.0)
    with pytest.raises(SeriesCancellationError):
        lambda_gamma_series(0.5, 0.1, 61)


@pytest.mark.parametrize("g", [0.3, 0.5, 0.7])
def test_curvature_at_zero(g):
    h = 1e-3
    fd = (lambda_gamma_integral(g, h).value + lambda_gamma_integral(g, -h).value) / h**2
    assert abs(fd - (2**g - 1)) <= 1e-4
    assert lambda_gamma_second(g, 0.0) == pytest.approx(2**g - 1, abs=1e-12)


def test_derivative_under_the_integral():
    for lam in (-2.0, -0.3, 0.4, 1.5):
        h = 1e-5
        fd = (lambda_gamma_integral(0.5, lam + h).value - lambda_gamma_integral(0.5, lam - h).value) / (2 * h)
        assert lambda_gamma_prime(0.5, lam)[0] == pytest.approx(fd, abs=1e-8)


def test_convex_on_grid():
    lams = np.linspace(-4, 3, 71)
    v = np.array([lambda_gamma_integral(0.4, float(l)).value for l in lams])
    assert np.all(v[2:] - 2 * v[1:-1] + v[:-2] >= -1e-6)


def test_closed_forms():
    assert lambda_one(1.0) == pytest.approx(math.e - 2, rel=1e-15)
    assert lambda_gamma(1.0, 0.7).method == "closed_form_1regular"
    for g in (0.2, 0.5, 1.0):
        assert mdp_rate(g, 0.0) == 0.0
    assert mdp_rate(0.5, 1.0) == pytest.approx(1 / (2 * (math.sqrt(2) - 1)), rel=1e-15)
    assert mdp_rate(1.0, 2.0) == 2.0
    with pytest.raises(RateFunctionDomainError):
        mdp_rate(1.5, 1.0)
    with pytest.raises(RateFunctionDomainError):
        lambda_gamma_integral(1.0, 0.5)


def test_legendre_basics():
    c = legendre_transform(0.5, 0.0)
    assert c.value == 0.0 and c.argmax_lambda == 0.0 and c.converged
    with pytest.raises(RateFunctionDomainError):
        legendre_transform(0.5, -1.5)
    for x in (-0.02, 0.02):
        r = legendre_transform(0.5, x).value * 2 * (2**0.5 - 1) / x**2
        assert 0.95 <= r <= 1.05


def test_legendre_argmax_solves_first_order_condition():
    xs = [-0.9, -0.5, 0.1, 1.0, 3.0]
    lams = []
    for x in xs:
        c = legendre_transform(0.6, x)
        assert c.converged and c.value >= 0
        assert lambda_gamma_prime(0.6, c.argmax_lambda)[0] == pytest.approx(x, abs=1e-8)
        lams.append(c.argmax_lambda)
    assert lams == sorted(lams)


def test_legendre_one_regular():
    c = legendre_transform(1.0, 1.0)
    assert c.value == pytest.approx(2 * math.log(2) - 1, rel=1e-14)


def test_legendre_reports_non_convergence_far_out():
    c = legendre_transform(0.5, 1e30)
    assert not c.converged


def test_finite_t_cgf_three_point():
    law = make_finite([0.5, 0.3, 0.2])
    assert finite_t_cgf(law, 1.0, 1.0) == pytest.approx(THREE_POINT_CGF, abs=1e-14)
    assert finite_t_cgf(law, 1.0, 0.0) == 0.0


def test_finite_t_cgf_converges():
    law = make_zipf(0.5)
    ref = lambda_gamma_integral(0.5, -1.0).value
    gaps = [abs(finite_t_cgf(law, t, -1.0) - ref) for t in (1e4, 1e6, 1e8)]
    assert gaps[-1] <= 0.05
    assert gaps[0] >= gaps[1] >= gaps[2]


def test_finite_t_cgf_convex_in_lambda():
    law = make_zipf(0.5)
    lams = np.linspace(-2, 1, 31)
    v = np.array([finite_t_cgf(law, 1e5, float(l)) for l in lams])
    assert np.all(v[2:] - 2 * v[1:-1] + v[:-2] >= -1e-9)
