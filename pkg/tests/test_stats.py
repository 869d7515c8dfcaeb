import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sst

from fvspine.errors import DegenerateSample, DimensionMismatch, InsufficientExpectedCounts, ZeroTrials
from fvspine.stats import (
    chisq_gof,
    chisq_homogeneity,
    dispersion_test,
    mean_ci,
    poisson_rate_ci,
    pool_classes,
    tv_distance,
    wilson_ci,
)


def test_wilson_values():
    lo, hi = wilson_ci(50, 100, 0.95)
    # closed form with z = 1.959964
    z = 1.959963984540054
    c = (0.5 + z * z / 200) / (1 + z * z / 100)
    h = z * math.sqrt(0.25 / 100 + z * z / 40000) / (1 + z * z / 100)
    assert abs(lo - (c - h)) < 1e-12 and abs(hi - (c + h)) < 1e-12
    assert abs(lo - 0.4038) < 1e-3 and abs(hi - 0.5962) < 1e-3
    assert wilson_ci(0, 10)[0] == 0.0
    assert wilson_ci(10, 10)[1] == 1.0
    with pytest.raises(ZeroTrials):
        wilson_ci(0, 0)


@given(st.integers(1, 10_000), st.data())
def test_wilson_in_unit_interval(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_ci(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


def test_garwood_values():
    r = poisson_rate_ci(3000, 1000.0)
    assert r.rate == 3.0
    assert abs((r.ci_high - r.ci_low) / 2 - 0.107) < 2e-3
    # Garwood bounds through gamma quantiles
    assert abs(r.ci_low - sst.gamma.ppf(0.025, 3000) / 1000) < 1e-12
    assert abs(r.ci_high - sst.gamma.ppf(0.975, 3001) / 1000) < 1e-12
    assert poisson_rate_ci(0, 5.0).ci_low == 0.0


@given(st.integers(0, 100_000), st.floats(0.01, 1e5))
def test_garwood_contains_estimate(k, T):
    r = poisson_rate_ci(k, T)
    assert r.ci_low <= r.rate <= r.ci_high


def test_mean_ci():
    m, lo, hi = mean_ci([1.0, 2.0, 3.0])
    assert m == 2.0 and lo < 2.0 < hi


def test_dispersion_poisson_passes():
    rng = np.random.default_rng(0)
    passed = [dispersion_test(rng.poisson(30, 1000)).passed for _ in range(500)]
    assert np.mean(passed) >= 0.98


def test_dispersion_geometric_fails():
    rng = np.random.default_rng(1)
    assert not any(dispersion_test(rng.geometric(1 / 30, 1000)).passed for _ in range(50))


def test_dispersion_errors():
    with pytest.raises(DegenerateSample):
        dispersion_test([5] * 40)
    with pytest.raises(ValueError):
        dispersion_test([1, 2, 3])


def test_tv():
    assert tv_distance([0.2, 0.8], [0.2, 0.8]) == 0
    assert tv_distance([1, 0], [0, 1]) == 1
    assert abs(tv_distance([2 / 3, 1 / 3], [4 / 7, 3 / 7]) - 2 / 21) < 1e-15
    with pytest.raises(DimensionMismatch):
        tv_distance([1, 0], [1, 0, 0])


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_tv_metric(seed):
    p, q, r = np.random.default_rng(seed).dirichlet(np.ones(4), 3)
    assert tv_distance(p, q) == tv_distance(q, p)
    assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-15


def test_gof_exact_fit():
    stat, p = chisq_gof([25, 50, 25], [0.25, 0.5, 0.25])
    assert stat == 0 and p == 1


def test_gof_nominal_size():
    # under the null the rejection rate at level 0.05 matches the level
    rng = np.random.default_rng(2)
    ps = np.array([chisq_gof(rng.multinomial(1000, [0.25] * 4), [0.25] * 4)[1] for _ in range(4000)])
    for level in (0.05, 0.2, 0.5):
        rate = np.mean(ps < level)
        assert abs(rate - level) < 4 * math.sqrt(level * (1 - level) / ps.size)


def test_gof_errors():
    with pytest.raises(InsufficientExpectedCounts):
        chisq_gof([10], [1.0])
    with pytest.raises(InsufficientExpectedCounts):
        chisq_gof([3, 3], [0.5, 0.5])


def test_homogeneity():
    stat, p = chisq_homogeneity([10, 20, 30], [20, 40, 60])
    assert stat < 1e-12 and p > 0.999
    ref = sst.chi2_contingency(np.array([[30, 12, 9], [20, 25, 11]]), correction=False)
    stat, p = chisq_homogeneity([30, 12, 9], [20, 25, 11])
    assert abs(stat - ref.statistic) < 1e-10 and abs(p - ref.pvalue) < 1e-12


def test_pool_classes():
    assert pool_classes([1, 3, 5, 7, 9], [1, 1, 3, 7, 9, 101, 5]).tolist() == [2, 1, 1, 1, 2]
