"""Augmented Dickey-Fuller unit-root testing on top of a QR-based OLS solver."""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.stats import norm

from .errors import DataError, RankDeficiencyError, SeriesTooShortError

logger = logging.getLogger(__name__)


class Regression(str, Enum):
    """Deterministic terms included in the ADF regression."""

    CONSTANT = 'c'
    CONSTANT_AND_TREND = 'ct'

    @classmethod
    def parse(cls, value: Union['Regression', str]) -> 'Regression':
        if isinstance(value, cls):
            return value
        aliases = {'constant': cls.CONSTANT, 'constant_and_trend': cls.CONSTANT_AND_TREND}
        return aliases.get(value, None) or cls(value)


# MacKinnon (1994) p-value surfaces for a single unit root: the statistic is
# mapped through a polynomial and the standard normal CDF. Coefficients are
# in increasing order of power.
_TAU_MAX = {Regression.CONSTANT: 2.74, Regression.CONSTANT_AND_TREND: 0.7}
_TAU_MIN = {Regression.CONSTANT: -18.83, Regression.CONSTANT_AND_TREND: -16.18}
_TAU_STAR = {Regression.CONSTANT: -1.61, Regression.CONSTANT_AND_TREND: -2.89}
_TAU_SMALL_P = {
    Regression.CONSTANT: (2.1659, 1.4412, 3.8269e-2),
    Regression.CONSTANT_AND_TREND: (3.2512, 1.6047, 4.9588e-2),
}
_TAU_LARGE_P = {
    Regression.CONSTANT: (1.7339, 9.3202e-1, -1.2745e-1, -1.0368e-2),
    Regression.CONSTANT_AND_TREND: (2.5261, 6.1654e-1, -3.7956e-1, -6.0285e-2),
}

# MacKinnon (2010) finite-sample critical value response surfaces:
# cv(T) = b0 + b1/T + b2/T^2 + b3/T^3
_CRITICAL_SURFACES = {
    Regression.CONSTANT: {
        '1%': (-3.43035, -6.5393, -16.786, -79.433),
        '5%': (-2.86154, -2.8903, -4.234, -40.040),
        '10%': (-2.56677, -1.5384, -2.809, 0.0),
    },
    Regression.CONSTANT_AND_TREND: {
        '1%': (-3.95877, -9.0531, -28.428, -134.155),
        '5%': (-3.41049, -4.3904, -9.036, -45.374),
        '10%': (-3.12705, -2.5856, -3.925, -22.380),
    },
}

MIN_OBSERVATIONS = 15


@dataclass(frozen=True)
class OlsFit:
    """Result of an ordinary least-squares fit."""

    coefficients: np.ndarray
    standard_errors: np.ndarray
    residuals: np.ndarray
    sigma2: float
    log_likelihood: float

    @property
    def nobs(self) -> int:
        return len(self.residuals)

    @property
    def aic(self) -> float:
        """Akaike information criterion."""
        return -2.0 * self.log_likelihood + 2.0 * len(self.coefficients)

    @property
    def t_values(self) -> np.ndarray:
        with np.errstate(divide='ignore', invalid='ignore'):
            return self.coefficients / self.standard_errors


@dataclass(frozen=True)
class AdfReport:
    """Outcome of one Augmented Dickey-Fuller test."""

    statistic: float
    p_value: float
    lags_used: int
    n_obs: int
    regression: Regression
    critical_values: Dict[str, float]
    aic: float

    def rejects_null(self, level: str = '5%') -> bool:
        """Whether the unit-root null is rejected at the given level."""
        return self.statistic < self.critical_values[level]

    def to_dict(self) -> dict:
        return {
            'statistic': self.statistic,
            'p_value': self.p_value,
            'lags_used': self.lags_used,
            'n_obs': self.n_obs,
            'regression': self.regression.value,
            'critical_values': dict(self.critical_values),
            'aic': self.aic,
        }


def ols(design: np.ndarray, response: Sequence[float]) -> OlsFit:
    """Fit ordinary least squares through a reduced QR factorisation.

    Args:
        design: (n, k) design matrix, n >= k, full column rank
        response: length-n response vector

    Returns:
        OlsFit with coefficients, standard errors from sigma^2 (X'X)^-1,
        residuals, sigma^2 = SSR/(n-k) and the Gaussian log-likelihood

    Raises:
        DataError: Dimension mismatch
        RankDeficiencyError: Design is not of full column rank
    """
    x = np.asarray(design, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise DataError(f"Dimension mismatch: design {x.shape}, response {y.shape}")
    n, k = x.shape
    if n < k:
        raise RankDeficiencyError(f"Need at least as many rows as columns, got {n}x{k}")

    q, r = np.linalg.qr(x, mode='reduced')
    diag = np.abs(np.diag(r))
    tolerance = max(n, k) * np.finfo(np.float64).eps * (diag.max() if diag.size else 0.0)
    if diag.size == 0 or np.any(diag <= tolerance):
        raise RankDeficiencyError(f"Design matrix of shape {x.shape} is rank deficient")

    coefficients = solve_triangular(r, q.T @ y)
    residuals = y - x @ coefficients
    ssr = float(residuals @ residuals)
    dof = n - k
    sigma2 = ssr / dof if dof > 0 else 0.0

    # (X'X)^-1 = R^-1 R^-T
    r_inv = solve_triangular(r, np.eye(k))
    xtx_inv_diag = np.sum(r_inv ** 2, axis=1)
    standard_errors = np.sqrt(sigma2 * xtx_inv_diag)

    if ssr > 0:
        log_likelihood = -0.5 * n * (math.log(2.0 * math.pi) + math.log(ssr / n) + 1.0)
    else:
        log_likelihood = math.inf

    return OlsFit(
        coefficients=coefficients,
        standard_errors=standard_errors,
        residuals=residuals,
        sigma2=sigma2,
        log_likelihood=log_likelihood,
    )


def mackinnon_p_value(statistic: float, regression: Union[Regression, str] = Regression.CONSTANT) -> float:
    """Approximate p-value of an ADF t-statistic (single unit root)."""
    regression = Regression.parse(regression)
    if statistic > _TAU_MAX[regression]:
        return 1.0
    if statistic < _TAU_MIN[regression]:
        return 0.0
    if statistic <= _TAU_STAR[regression]:
        coefficients = _TAU_SMALL_P[regression]
    else:
        coefficients = _TAU_LARGE_P[regression]
    return float(norm.cdf(np.polyval(coefficients[::-1], statistic)))


def mackinnon_critical_values(regression: Union[Regression, str], nobs: Optional[int] = None) -> Dict[str, float]:
    """Critical values at 1%, 5% and 10% for a sample size (asymptotic if None)."""
    regression = Regression.parse(regression)
    values = {}
    for level, (b0, b1, b2, b3) in _CRITICAL_SURFACES[regression].items():
        if nobs is None:
            values[level] = b0
        else:
            inv = 1.0 / nobs
            values[level] = b0 + b1 * inv + b2 * inv ** 2 + b3 * inv ** 3
    return values


def default_max_lags(nobs: int) -> int:
    """Schwert upper bound floor(12 * (T/100)^(1/4))."""
    return int(math.floor(12.0 * (nobs / 100.0) ** 0.25))


def _adf_design(levels: np.ndarray, diffs: np.ndarray, lags: int, nobs: int,
                regression: Regression) -> np.ndarray:
    """Design matrix for the last ``nobs`` differences.

    Columns: lagged level, constant, [trend], then ``lags`` lagged differences.
    """
    end = len(diffs)
    rows = np.arange(end - nobs, end)
    columns = [levels[rows], np.ones(nobs)]
    if regression is Regression.CONSTANT_AND_TREND:
        columns.append(np.arange(1, nobs + 1, dtype=np.float64))
    for lag in range(1, lags + 1):
        columns.append(diffs[rows - lag])
    return np.column_stack(columns)


def adf_test(series: Sequence[float], regression: Union[Regression, str] = Regression.CONSTANT,
             max_lags: Optional[int] = None) -> AdfReport:
    """Augmented Dickey-Fuller test for a unit root.

    Fits dy_t = a (+ b t) + g y_{t-1} + sum_i d_i dy_{t-i} + e_t, choosing the
    lag order by minimum AIC over 0..max_lags on a common sample, then refits
    the chosen order on all available observations.

    Args:
        series: Finite values, at least 15 + max_lags long
        regression: 'c' (constant) or 'ct' (constant and linear trend)
        max_lags: Upper bound of the lag search (default Schwert bound)

    Returns:
        AdfReport with the t-statistic on g, MacKinnon p-value and critical values

    Raises:
        SeriesTooShortError: Not enough observations
        DataError: Non-finite or constant series
    """
    regression = Regression.parse(regression)
    y = np.asarray(series, dtype=np.float64)
    if y.ndim != 1:
        raise DataError("ADF input must be one-dimensional")
    if not np.all(np.isfinite(y)):
        raise DataError("ADF input contains non-finite values")
    total = len(y)

    ntrend = 2 if regression is Regression.CONSTANT_AND_TREND else 1
    if max_lags is None:
        max_lags = default_max_lags(total)
        max_lags = max(0, min(max_lags, total // 2 - ntrend - 1))
    if max_lags < 0:
        raise DataError(f"max_lags must be non-negative, got {max_lags}")
    required = MIN_OBSERVATIONS + max_lags
    if total < required:
        raise SeriesTooShortError(total, required, what="ADF series")
    if np.ptp(y) == 0.0:
        raise DataError("ADF input is constant (zero variance)")

    diffs = np.diff(y)
    levels = y[:-1]

    common_nobs = len(diffs) - max_lags
    best_lag, best_aic = 0, math.inf
    for lag in range(max_lags + 1):
        fit = ols(_adf_design(levels, diffs, lag, common_nobs, regression), diffs[-common_nobs:])
        if fit.aic < best_aic:
            best_lag, best_aic = lag, fit.aic

    nobs = len(diffs) - best_lag
    fit = ols(_adf_design(levels, diffs, best_lag, nobs, regression), diffs[-nobs:])
    statistic = float(fit.coefficients[0] / fit.standard_errors[0])

    report = AdfReport(
        statistic=statistic,
        p_value=mackinnon_p_value(statistic, regression),
        lags_used=best_lag,
        n_obs=nobs,
        regression=regression,
        critical_values=mackinnon_critical_values(regression, nobs),
        aic=fit.aic,
    )
    logger.debug(f"ADF({regression.value}) stat={statistic:.4f} p={report.p_value:.4f} lags={best_lag}")
    return report


def adf_on_slices(slices, channel: Union[int, str] = 0,
                  regression: Union[Regression, str] = Regression.CONSTANT,
                  max_lags: Optional[int] = None) -> AdfReport:
    """Run the ADF test on one channel of a slice tensor.

    The channel of every slice is concatenated in slice order, timesteps in
    order, into one series.

    Args:
        slices: SliceTensor (scaled or not)
        channel: Channel index or name
        regression: Deterministic terms of the test regression
        max_lags: Upper bound of the lag search

    Returns:
        AdfReport of the concatenated series
    """
    if len(slices) == 0:
        raise DataError("Slice tensor is empty")
    index = slices.channel_index(channel)
    series = np.ascontiguousarray(slices.data[:, :, index]).ravel()
    return adf_test(series, regression=regression, max_lags=max_lags)
