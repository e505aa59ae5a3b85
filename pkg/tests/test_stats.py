import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zrplab import stats

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_mean_var_matches_numpy():
    x = np.random.default_rng(0).normal(3.0, 2.0, 5000)
    r = stats.mean_var(x)
    assert r.mean == pytest.approx(x.mean(), rel=1e-12)
    assert r.var == pytest.approx(x.var(ddof=1), rel=1e-10)
    assert r.se_mean == pytest.approx(x.std(ddof=1) / math.sqrt(x.size), rel=1e-10)
    # normal data: Var(s^2) ~ 2 sigma^4 / (n - 1)
    assert r.se_var == pytest.approx(math.sqrt(2 * 16 / x.size), rel=0.1)


@settings(max_examples=50)
@given(a=st.lists(finite, min_size=1, max_size=30), b=st.lists(finite, min_size=1, max_size=30))
def test_moments_merge_equals_pooling(a, b):
    merged = stats.Moments.of(a, 1.0) + stats.Moments.of(b, 1.0)
    pooled = stats.Moments.of(a + b, 1.0)
    assert merged.n == pooled.n
    assert np.allclose(merged.sums, pooled.sums, rtol=1e-9, atol=1e-6)


def test_moments_reject_mismatched_shift():
    with pytest.raises(ValueError):
        stats.Moments.of([1.0], 0.0) + stats.Moments.of([1.0], 1.0)


def test_covariance_and_comoments():
    rng = np.random.default_rng(1)
    x = rng.normal(size=4000)
    y = 0.5 * x + rng.normal(size=4000)
    cov, se = stats.covariance(x, y)
    assert cov == pytest.approx(np.cov(x, y, ddof=1)[0, 1], rel=1e-10)
    assert abs(cov - 0.5) <= 4 * se
    split = stats.CoMoments.of(x[:1000], y[:1000]) + stats.CoMoments.of(x[1000:], y[1000:])
    assert split.summary()[0] == pytest.approx(cov, rel=1e-8)


def test_loglog_slope_recovers_power_law():
    fit = stats.loglog_slope([(n, 3.0 * n**-0.75) for n in (64, 128, 256, 512)])
    assert fit.slope == pytest.approx(-0.75, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    fit = stats.loglog_slope([(n, 3.0 * n**-0.75) for n in (64, 128, 256, 512)], y_se=[0.01] * 4)
    assert fit.slope_se > 0
    with pytest.raises(stats.InsufficientData):
        stats.loglog_slope([(1, 1), (2, 2)])
    with pytest.raises(ValueError):
        stats.loglog_slope([(1, 1), (2, -2), (3, 3)])


def test_gaussianity_rules():
    rng = np.random.default_rng(2)
    assert stats.gaussianity(rng.normal(size=4096)).passed
    assert not stats.gaussianity(rng.exponential(size=4096)).passed
    flat = stats.gaussianity(np.ones(2000))
    assert not flat.passed and flat.reason == "zero variance"
    with pytest.raises(stats.InsufficientData):
        stats.gaussianity(rng.normal(size=999))


def test_lattice_correction_removes_discreteness():
    rng = np.random.default_rng(3)
    m = 50
    z = (rng.binomial(m, 0.5, 4096) - m / 2) / math.sqrt(m / 4)
    raw = stats.gaussianity(z)
    corrected = stats.gaussianity(z, lattice=1 / math.sqrt(m / 4))
    assert "cdf distance" in raw.reason
    assert corrected.ks_distance < raw.ks_distance / 2


def test_ratio_se_against_simulation():
    rng = np.random.default_rng(4)
    a = rng.normal(10, 1, (20000, 50)).mean(axis=1)
    b = rng.normal(5, 1, (20000, 50)).mean(axis=1)
    empirical = np.std(a / b)
    assert stats.ratio_se(10, 1 / math.sqrt(50), 5, 1 / math.sqrt(50)) == pytest.approx(empirical, rel=0.05)


def test_insufficient_and_nonfinite():
    with pytest.raises(stats.InsufficientData):
        stats.mean_var([1.0])
    with pytest.raises(ValueError):
        stats.mean_var([1.0, float("nan")])


def test_calibration_passes_on_null_data():
    result = stats.calibrate(np.random.default_rng(5), trials=50)
    assert result.passed
