import numpy as np
import pytest

from tslab.errors import DataError, RankDeficiencyError, SeriesTooShortError
from tslab.stationarity import (
    Regression,
    adf_on_slices,
    adf_test,
    mackinnon_critical_values,
    mackinnon_p_value,
    ols,
)
from tslab.windowing import SliceSpec, make_slices


def test_ols_matches_normal_equations():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(10, 60))
        k = int(rng.integers(1, 6))
        x = rng.normal(size=(n, k))
        y = x @ rng.normal(size=k) + rng.normal(scale=0.5, size=n)

        fit = ols(x, y)
        expected = np.linalg.solve(x.T @ x, x.T @ y)

        np.testing.assert_allclose(fit.coefficients, expected, rtol=1e-8, atol=1e-10)
        sigma2 = float(fit.residuals @ fit.residuals) / (n - k)
        np.testing.assert_allclose(
            fit.standard_errors, np.sqrt(sigma2 * np.diag(np.linalg.inv(x.T @ x))), rtol=1e-8
        )


def test_ols_exact_fit():
    x = np.column_stack([np.ones(5), np.arange(5.0)])
    y = 2.0 + 3.0 * np.arange(5.0)

    fit = ols(x, y)

    np.testing.assert_allclose(fit.coefficients, [2.0, 3.0], atol=1e-12)
    assert fit.nobs == 5


def test_ols_rank_deficient():
    x = np.column_stack([np.ones(10), 2 * np.ones(10)])

    with pytest.raises(RankDeficiencyError):
        ols(x, np.arange(10.0))
    with pytest.raises(RankDeficiencyError):
        ols(np.ones((2, 3)), np.ones(2))


def test_ols_dimension_mismatch():
    with pytest.raises(DataError):
        ols(np.ones((5, 2)), np.ones(4))


def test_adf_separates_random_walks_from_white_noise():
    walk_rejections = 0
    noise_rejections = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        shocks = rng.normal(size=2000)
        if adf_test(np.cumsum(shocks)).p_value < 0.05:
            walk_rejections += 1
        if adf_test(shocks).p_value < 0.05:
            noise_rejections += 1

    assert walk_rejections <= 3
    assert noise_rejections >= 19


def test_adf_report_fields():
    rng = np.random.default_rng(3)
    report = adf_test(rng.normal(size=500), regression='ct')

    assert report.regression is Regression.CONSTANT_AND_TREND
    assert 0.0 <= report.p_value <= 1.0
    assert report.critical_values['1%'] < report.critical_values['5%'] < report.critical_values['10%']
    assert report.rejects_null('5%')
    assert report.n_obs == 499 - report.lags_used
    assert report.to_dict()['regression'] == 'ct'


def test_adf_fixed_lag_search_bound():
    rng = np.random.default_rng(9)
    report = adf_test(np.cumsum(rng.normal(size=300)), max_lags=0)

    assert report.lags_used == 0
    assert report.n_obs == 299


def test_adf_errors():
    with pytest.raises(SeriesTooShortError):
        adf_test(np.arange(10.0), max_lags=0)
    with pytest.raises(DataError):
        adf_test(np.full(50, 3.0))
    values = np.random.default_rng(1).normal(size=50)
    values[10] = np.nan
    with pytest.raises(DataError):
        adf_test(values)


def test_p_value_monotonic_and_bounded():
    statistics = np.linspace(-20.0, 3.0, 200)
    p_values = [mackinnon_p_value(s, 'c') for s in statistics]
    assert all(0.0 <= p <= 1.0 for p in p_values)
    assert all(b >= a - 1e-12 for a, b in zip(p_values, p_values[1:]))
    assert all(0.0 <= mackinnon_p_value(s, 'ct') <= 1.0 for s in statistics)


def test_critical_values_asymptotic_and_finite_sample():
    asymptotic = mackinnon_critical_values('c')
    finite = mackinnon_critical_values('c', nobs=100)

    assert asymptotic['5%'] == pytest.approx(-2.86154)
    assert finite['5%'] < asymptotic['5%']
    assert mackinnon_p_value(asymptotic['5%'], 'c') == pytest.approx(0.05, abs=0.01)


def test_adf_on_slices_concatenates_channel():
    rng = np.random.default_rng(4)
    noise = rng.normal(size=400)
    slices = make_slices({'close': noise}, SliceSpec(lookback=20, stride=20))

    report = adf_on_slices(slices, 'close', max_lags=2)
    direct = adf_test(noise, max_lags=2)

    assert report.statistic == pytest.approx(direct.statistic)


def test_ols_residuals_orthogonal_to_design():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(20, 200))
        k = int(rng.integers(1, 6))
        x = rng.normal(size=(n, k))
        y = x @ rng.normal(size=k) + rng.normal(size=n)

        fit = ols(x, y)

        np.testing.assert_allclose(x.T @ fit.residuals, 0.0, atol=1e-9 * np.abs(y).sum())


def test_adf_with_trend_at_one_percent():
    walks_not_rejected = 0
    noise_rejected = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        shocks = rng.normal(size=2000)
        if adf_test(np.cumsum(shocks), regression='ct').statistic > -3.96:
            walks_not_rejected += 1
        noise = adf_test(shocks, regression='ct')
        if noise.statistic < -3.96 and noise.p_value < 0.01:
            noise_rejected += 1

    assert walks_not_rejected >= 19
    assert noise_rejected == 20


@pytest.mark.parametrize('scale,shift', [(2.5, 0.0), (0.01, 100.0), (1000.0, -3.0)])
def test_adf_invariant_to_affine_rescaling(scale, shift):
    walk = np.cumsum(np.random.default_rng(12).normal(size=600))

    base = adf_test(walk, max_lags=6)
    moved = adf_test(scale * walk + shift, max_lags=6)

    assert moved.lags_used == base.lags_used
    assert moved.statistic == pytest.approx(base.statistic, rel=1e-7)
    assert moved.p_value == pytest.approx(base.p_value, rel=1e-6)
