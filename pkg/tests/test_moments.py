import math

import numpy as np
import pytest
from scipy import stats

from rangerenew.laws import make_factorial_gap, make_finite, make_geometric, make_zipf, regular_profile
from rangerenew.moments import (_delta_pairwise, asymptotic_mu, asymptotic_sigma_sq, delta_n, exact_mean_Rn,
                                exact_var_Rn, moment_row, mu, mu_ddot, mu_dot, poisson_chernoff_lower,
                                poisson_chernoff_upper, sigma_sq)

# three-point law (0.5, 0.3, 0.2); reference values from 30-digit mpmath sums
MU_1 = 0.833920366527666851659
SIGMA_SQ_1 = 0.579068510171225093372
MU_DOT_1 = 0.689256946676428443356
MU_2 = 1.412988876698891945032
# Zipf gamma = 0.5, mpmath Euler-Maclaurin sums
ZIPF_MU_1E4 = 137.697659788534191706
ZIPF_SIGMA_SQ_1E4 = 57.2433449726337769285
ZIPF_MU_1E6 = 1381.47659788534191706


@pytest.fixture
def three():
    return make_finite([0.5, 0.3, 0.2])


def test_three_point_values(three):
    assert mu(three, 1.0).value == pytest.approx(MU_1, abs=1e-15)
    assert sigma_sq(three, 1.0).value == pytest.approx(SIGMA_SQ_1, abs=1e-15)
    assert mu_dot(three, 1.0).value == pytest.approx(MU_DOT_1, abs=1e-15)
    assert mu(three, 2.0).value == pytest.approx(MU_2, abs=1e-15)
    assert mu_ddot(three, 0.0).value == pytest.approx(-0.38, abs=1e-15)


def test_three_point_exact_moments(three):
    assert exact_mean_Rn(three, 1).value == 1.0
    assert exact_mean_Rn(three, 2).value == pytest.approx(1.62, abs=1e-15)
    assert delta_n(three, 1).value == pytest.approx(0.62, abs=1e-15)
    assert exact_var_Rn(three, 1).value == 0.0
    assert exact_var_Rn(three, 2).value == pytest.approx(0.2356, abs=1e-15)


def test_zero_time_and_point_mass():
    law = make_zipf(0.5)
    assert mu(law, 0.0).value == 0.0
    assert sigma_sq(law, 0.0).value == 0.0
    one = make_finite([1.0])
    assert exact_mean_Rn(one, 50).value == 1.0
    assert exact_var_Rn(one, 50).value == 0.0
    with pytest.raises(ValueError):
        mu(law, -1.0)
    with pytest.raises(ValueError):
        exact_mean_Rn(law, 0)


def test_zipf_moments_against_high_precision():
    law = make_zipf(0.5)
    m = mu(law, 1e4)
    assert abs(m.value - ZIPF_MU_1E4) <= m.abs_error + 1e-12
    s = sigma_sq(law, 1e4)
    assert abs(s.value - ZIPF_SIGMA_SQ_1E4) <= s.abs_error + 1e-12
    m6 = mu(law, 1e6)
    assert abs(m6.value - ZIPF_MU_1E6) <= m6.abs_error + 1e-11


def test_mu_monotone_and_ordered():
    law = make_zipf(0.3)
    ts = np.logspace(0, 7, 15)
    mus = [mu(law, t) for t in ts]
    for a, b in zip(mus, mus[1:]):
        assert a.lo <= b.hi
    for t, m in zip(ts, mus):
        s = sigma_sq(law, t)
        assert -s.abs_error <= s.value <= m.hi and m.lo <= t


def test_asymptotic_forms():
    law = make_zipf(0.5)
    prof = regular_profile(law)
    t = 1e8
    assert mu(law, t).value / asymptotic_mu(prof, t) == pytest.approx(1.0, abs=1e-3)
    assert sigma_sq(law, t).value / asymptotic_sigma_sq(prof, t) == pytest.approx(1.0, abs=1e-3)
    assert asymptotic_mu(prof, 1e6) == pytest.approx(math.sqrt(6e6 / math.pi), rel=1e-12)


@pytest.mark.parametrize("law", [make_zipf(0.3), make_zipf(0.5), make_zipf(0.7), make_geometric(0.5),
                                 make_finite([0.4, 0.3, 0.2, 0.1])], ids=lambda l: l.spec)
@pytest.mark.parametrize("n", [3, 50, 2000])
def test_delta_matches_pair_sum(law, n):
    K = 1500 if law.support_size is None else law.support_size
    d = delta_n(law, n, K)
    ref = _delta_pairwise(law, n, K)
    # the certified value covers the unsummed pairs j > K, so ref sits at its lower edge
    assert d.lo - 1e-12 <= ref <= d.hi + 1e-12


def test_var_close_to_sigma_sq_for_zipf():
    law = make_zipf(0.5)
    v = exact_var_Rn(law, 10**5)
    s = sigma_sq(law, 10**5)
    assert 0.99 <= v.value / s.value <= 1.0


def test_var_against_enumeration_for_geometric():
    # enumerate all words over the first 40 symbols; the missing mass is ~4 * 2^-40
    law = make_geometric(0.5)
    v = exact_var_Rn(law, 4)
    p = law.pmf_range(1, 41)
    words = np.array(np.meshgrid(*[np.arange(40)] * 4, indexing="ij")).reshape(4, -1)
    probs = np.prod(p[words], axis=0)
    s = np.sort(words, axis=0)
    distinct = 1 + np.count_nonzero(s[1:] != s[:-1], axis=0)
    mean = np.sum(probs * distinct)
    var = np.sum(probs * distinct**2) - mean**2
    assert v.value == pytest.approx(var, abs=1e-10)


def test_factorial_gap_moments_are_finite():
    law = make_factorial_gap()
    for t in (1.0, 4096.0, 1e12):
        m = mu(law, t)
        assert 0 < m.value <= 7 and m.abs_error < 1e-9


def test_chernoff_bounds():
    assert poisson_chernoff_upper(1.0, 2) == pytest.approx(math.e / 4, rel=1e-15)
    # x = 0 is an equality case, hence the rounding slack
    for lam in (0.5, 3.0, 12.0):
        for x in range(0, int(lam + 10 * math.sqrt(lam)) + 5):
            if x > lam:
                assert poisson_chernoff_upper(lam, x) >= stats.poisson.sf(x - 1, lam) * (1 - 1e-13)
            elif x < lam:
                assert poisson_chernoff_lower(lam, x) >= stats.poisson.cdf(x, lam) * (1 - 1e-13)
    assert poisson_chernoff_lower(2.0, 0) == pytest.approx(math.exp(-2.0))
    with pytest.raises(ValueError):
        poisson_chernoff_upper(2.0, 1.0)
    with pytest.raises(ValueError):
        poisson_chernoff_lower(2.0, 3.0)


def test_moment_row(three):
    row = moment_row(three, 2.0)
    assert row.exact_mean_Rn.value == pytest.approx(1.62)
    assert row.asym_mu is None
    zrow = moment_row(make_zipf(0.5), 100.5)
    assert zrow.exact_mean_Rn is None and zrow.asym_mu > 0
