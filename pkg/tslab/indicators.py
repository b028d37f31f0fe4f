"""Technical indicator channels and their scaling taxonomy.

Undefined warm-up entries are NaN. Overlaid indicators live on the price
axis and share the price scaling; bounded indicators are divided by their
bound; separate indicators get their own statistics.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, SeriesTooShortError

logger = logging.getLogger(__name__)


class Taxonomy(str, Enum):
    """How an indicator channel must be scaled."""

    OVERLAID = 'overlaid'
    BOUNDED = 'bounded'
    SEPARATE = 'separate'


@dataclass(frozen=True)
class IndicatorSeries:
    """Indicator values aligned to the source series."""

    name: str
    values: np.ndarray
    taxonomy: Taxonomy
    bound_max: Optional[float] = None

    def __post_init__(self):
        if self.taxonomy is Taxonomy.BOUNDED and self.bound_max is None:
            raise ValueError(f"Bounded indicator '{self.name}' needs bound_max")
        self.values.setflags(write=False)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def defined(self) -> np.ndarray:
        """Boolean mask of defined (post warm-up) entries."""
        return ~np.isnan(self.values)

    @property
    def warmup(self) -> int:
        """Number of leading undefined entries."""
        defined = np.flatnonzero(self.defined)
        return int(defined[0]) if defined.size else len(self.values)


@dataclass(frozen=True)
class IndicatorSpec:
    """One configured indicator: name and period."""

    name: str
    period: int

    @property
    def channel_name(self) -> str:
        return f"{self.name}{self.period}"


def _validate(closes: Sequence[float], period: int) -> np.ndarray:
    values = np.asarray(closes, dtype=np.float64)
    if period <= 0:
        raise DataError(f"Indicator period must be positive, got {period}")
    if period > len(values):
        raise SeriesTooShortError(len(values), period, what="indicator input")
    return values


def _windowed(values: np.ndarray, period: int, reducer: Callable) -> np.ndarray:
    out = np.full(len(values), np.nan)
    out[period - 1:] = reducer(sliding_window_view(values, period), axis=1)
    return out


def sma(closes: Sequence[float], period: int) -> IndicatorSeries:
    """Simple moving average over the last ``period`` closes."""
    values = _validate(closes, period)
    return IndicatorSeries(f"sma{period}", _windowed(values, period, np.mean), Taxonomy.OVERLAID)


def ema(closes: Sequence[float], period: int) -> IndicatorSeries:
    """Exponential moving average with alpha = 2/(period+1).

    Seeded with the SMA of the first ``period`` closes at index period-1.
    """
    values = _validate(closes, period)
    alpha = 2.0 / (period + 1)
    out = np.full(len(values), np.nan)
    current = float(np.mean(values[:period]))
    out[period - 1] = current
    for t in range(period, len(values)):
        current = alpha * values[t] + (1.0 - alpha) * current
        out[t] = current
    return IndicatorSeries(f"ema{period}", out, Taxonomy.OVERLAID)


def rolling_max(closes: Sequence[float], period: int) -> IndicatorSeries:
    """Highest close of the last ``period`` bars, current bar included."""
    values = _validate(closes, period)
    return IndicatorSeries(f"rolling_max{period}", _windowed(values, period, np.max), Taxonomy.OVERLAID)


def rolling_min(closes: Sequence[float], period: int) -> IndicatorSeries:
    """Lowest close of the last ``period`` bars, current bar included."""
    values = _validate(closes, period)
    return IndicatorSeries(f"rolling_min{period}", _windowed(values, period, np.min), Taxonomy.OVERLAID)


def rsi(closes: Sequence[float], period: int) -> IndicatorSeries:
    """Relative Strength Index with Wilder smoothing, in [0, 100].

    The first value (index ``period``) averages the first ``period`` gains and
    losses; later values use avg = (avg * (period - 1) + current) / period.
    A window with neither gains nor losses reads 50.
    """
    values = _validate(closes, period)
    if len(values) <= period:
        raise SeriesTooShortError(len(values), period + 1, what="RSI input")

    deltas = np.diff(values)
    gains = np.clip(deltas, 0.0, None)
    losses = np.clip(-deltas, 0.0, None)

    out = np.full(len(values), np.nan)
    avg_gain = float(np.mean(gains[:period]))
    avg_loss = float(np.mean(losses[:period]))
    out[period] = _rsi_value(avg_gain, avg_loss)
    for t in range(period + 1, len(values)):
        avg_gain = (avg_gain * (period - 1) + gains[t - 1]) / period
        avg_loss = (avg_loss * (period - 1) + losses[t - 1]) / period
        out[t] = _rsi_value(avg_gain, avg_loss)
    return IndicatorSeries(f"rsi{period}", out, Taxonomy.BOUNDED, bound_max=100.0)


def _rsi_value(avg_gain: float, avg_loss: float) -> float:
    if avg_loss == 0.0:
        return 50.0 if avg_gain == 0.0 else 100.0
    if avg_gain == 0.0:
        return 0.0
    return 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)


INDICATORS: Dict[str, Callable[[Sequence[float], int], IndicatorSeries]] = {
    'sma': sma,
    'ema': ema,
    'rolling_max': rolling_max,
    'rolling_min': rolling_min,
    'rsi': rsi,
}

# Scaling taxonomy per indicator, known before any values are computed
INDICATOR_TAXONOMY: Dict[str, Tuple[Taxonomy, Optional[float]]] = {
    'sma': (Taxonomy.OVERLAID, None),
    'ema': (Taxonomy.OVERLAID, None),
    'rolling_max': (Taxonomy.OVERLAID, None),
    'rolling_min': (Taxonomy.OVERLAID, None),
    'rsi': (Taxonomy.BOUNDED, 100.0),
}


def compute_indicator(spec: IndicatorSpec, closes: Sequence[float]) -> IndicatorSeries:
    """Compute a configured indicator on closes.

    Args:
        spec: Indicator name and period
        closes: Close prices

    Returns:
        IndicatorSeries named after the spec's channel name
    """
    try:
        function = INDICATORS[spec.name]
    except KeyError:
        raise DataError(f"Unknown indicator '{spec.name}'. Known: {', '.join(sorted(INDICATORS))}")
    series = function(closes, spec.period)
    logger.debug(f"Computed {series.name} (warm-up {series.warmup} bars)")
    return series
