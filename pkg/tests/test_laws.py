import math
import warnings

import numpy as np
import pytest
from scipy import special, stats

from rangerenew import laws
from rangerenew.laws import (LawParameterError, OutOfSupportWarning, make_factorial_gap, make_finite,
                             make_geometric, make_zipf, parse_law, pmf, regular_profile, sample)
from rangerenew.rng import RngState


def test_zipf_normalizer_matches_riemann_zeta():
    for g in (0.3, 0.5, 0.7, 0.9):
        z, err = laws.zipf_normalizer(1 / g)
        assert abs(z - special.zeta(1 / g)) <= err + 1e-15
        assert err < 1e-14


def test_zipf_pmf_and_tail_mass():
    law = make_zipf(0.5)
    assert pmf(law, 1) == pytest.approx(6 / math.pi**2, rel=1e-15)
    head = math.fsum(law.pmf_range(1, 10001).tolist())
    # tail_mass is an upper bound on the exact remainder
    exact_tail = 1 - head
    assert exact_tail <= law.tail_mass(10000) <= exact_tail * 1.001


def test_tail_power_sum_bounds():
    law = make_zipf(0.5)
    exact = math.fsum((law.pmf_range(101, 10**6) ** 2).tolist())
    assert exact <= law.tail_power_sum(100, 2)
    g = make_geometric(0.5)
    assert g.tail_power_sum(3, 2) == pytest.approx(math.fsum((g.pmf_range(4, 200) ** 2).tolist()), rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5])
def test_zipf_rejects_bad_gamma(bad):
    with pytest.raises(LawParameterError):
        make_zipf(bad)


def test_finite_law_validation_and_sorting():
    law = make_finite([0.2, 0.5, 0.3])
    np.testing.assert_array_equal(law.weights, [0.5, 0.3, 0.2])
    with pytest.raises(LawParameterError):
        make_finite([0.5, 0.4])
    with pytest.raises(LawParameterError):
        make_finite([1.2, -0.2])
    with pytest.raises(LawParameterError):
        make_finite([])


def test_finite_pmf_beyond_support_warns():
    law = make_finite([0.5, 0.3, 0.2])
    with pytest.warns(OutOfSupportWarning):
        assert pmf(law, 4) == 0.0
    with pytest.raises(ValueError):
        pmf(law, 0)


def test_factorial_gap_pmf():
    law = make_factorial_gap()
    expected = [2 * (0.5 ** math.factorial(i) - 0.5 ** math.factorial(i + 1)) for i in range(1, 5)]
    np.testing.assert_allclose(law.pmf_range(1, 5), expected, rtol=1e-15)
    assert math.fsum(law.pmf_range(1, 20).tolist()) == pytest.approx(1.0, abs=1e-15)
    # underflow starts at i = 7
    assert law.pmf_range(6, 7)[0] > 0 and law.pmf_range(7, 8)[0] == 0.0
    assert law.tail_mass(2) == pytest.approx(2 * 0.5**6, rel=1e-15)


def test_geometric_pmf_sums_to_one():
    law = make_geometric(0.5)
    assert math.fsum(law.pmf_range(1, 200).tolist()) == pytest.approx(1.0, abs=1e-15)


def test_parse_law_forms():
    assert parse_law("zipf:γ=0.5").gamma == 0.5
    assert parse_law("zipf:gamma=0.3").gamma == 0.3
    assert parse_law("geom:q=0.25").q == 0.25
    assert parse_law("finite:0.5,0.3,0.2").support_size == 3
    assert parse_law("factgap").kind == "factgap"
    for bad in ("zipf:γ=1.5", "poisson:1", "finite:0.5,0.6", "zipf"):
        with pytest.raises(LawParameterError):
            parse_law(bad)


def test_regular_profile():
    p = regular_profile(make_zipf(0.5))
    assert p.gamma == 0.5
    z = special.zeta(2.0)
    assert p.zeta(100.0) == pytest.approx(math.sqrt(100 / z))
    assert p.phi(p.zeta(7.0)) == pytest.approx(7.0)
    assert regular_profile(make_geometric(0.5)).gamma == 1.0
    assert regular_profile(make_finite([1.0])) is None


def _chi2_pvalue(draws, probs, k):
    counts = np.bincount(np.minimum(draws, k + 1).astype(np.int64), minlength=k + 2)[1 : k + 1]
    other = draws.size - counts.sum()
    expected = np.append(probs[:k], 1 - probs[:k].sum()) * draws.size
    return stats.chisquare(np.append(counts, other), expected).pvalue


@pytest.mark.parametrize("law", [make_zipf(0.5), make_zipf(0.8), make_geometric(0.3),
                                 make_finite([0.5, 0.3, 0.2]), make_factorial_gap()],
                         ids=lambda l: l.spec)
def test_sampler_frequencies(law):
    draws = law.draw(2024, np.arange(20), 0, 10_000).ravel()
    assert np.all(draws >= 1) and np.all(draws == np.floor(draws))
    k = 3 if law.support_size is None or law.support_size > 3 else law.support_size - 1
    k = max(k, 1)
    assert _chi2_pvalue(draws, law.pmf_range(1, 30), k) > 1e-4


def test_zipf_tail_sampler_is_exact():
    # condition on i > 4096 and compare block frequencies against exact pmf sums
    law = make_zipf(0.5)
    h = laws.ZIPF_SAMPLER_TABLE
    pos = np.arange(200_000)
    x = law._tail_draws(77, np.zeros(pos.size, dtype=np.uint64), pos)
    assert x.min() > h
    edges = np.array([h, 5000, 6000, 8000, 12000, 20000, 50000, np.inf])
    counts = np.histogram(x, bins=edges)[0]
    tail = law.tail_mass(h) * law.normalizer
    # exact mass per bin from zeta partial sums
    probs = []
    for a, b in zip(edges[:-1], edges[1:]):
        hi = special.zeta(2.0, b + 1) if np.isfinite(b) else 0.0
        probs.append((special.zeta(2.0, a + 1) - hi))
    probs = np.array(probs) / special.zeta(2.0, h + 1)
    assert stats.chisquare(counts, probs * pos.size).pvalue > 1e-4
    assert tail > 0


def test_sample_advances_state():
    law = make_zipf(0.5)
    s = RngState(3, 1)
    one = sample(law, s)
    rest = sample(law, s, size=4)
    both = sample(law, RngState(3, 1), size=5)
    assert isinstance(one, int)
    np.testing.assert_array_equal(np.append(one, rest), both)
