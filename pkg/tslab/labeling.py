"""Label families aligned to slice end indices.

Future-looking labels read bars in (t, t+n] for a slice ending at t; probe
conditions read the slice itself. Ties always resolve to the down/0 side.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import LabelingError
from .indicators import ema, sma

logger = logging.getLogger(__name__)


class LabelFamily(str, Enum):
    NBAR_UPDOWN = 'nbar_updown'
    NBAR_CHANGE = 'nbar_change'
    NBAR_LOGRET = 'nbar_logret'
    MA_UPDOWN = 'ma_updown'
    TREND_STRENGTH = 'trend_strength'
    TREND_DIRECTION = 'trend_direction'
    PCTQ = 'pctq'
    QCLASS = 'qclass'
    PROBE = 'probe'


CLASS_COUNTS = {
    LabelFamily.NBAR_UPDOWN: 2,
    LabelFamily.MA_UPDOWN: 2,
    LabelFamily.TREND_DIRECTION: 2,
    LabelFamily.QCLASS: 3,
    LabelFamily.PROBE: 2,
}

NBAR_FAMILIES = (LabelFamily.NBAR_UPDOWN, LabelFamily.NBAR_CHANGE, LabelFamily.NBAR_LOGRET)


class TrendMethod(str, Enum):
    REGRESSION = 'regression'
    MA_FRACTION = 'ma_fraction'


class ProbeCondition(str, Enum):
    """Within-slice conditions used by the learnability probe."""

    C5 = 'c5'
    EMA5 = 'ema5'
    HC10 = 'hc10'

    @property
    def description(self) -> str:
        return {
            ProbeCondition.C5: 'C_t > C_t-5',
            ProbeCondition.EMA5: 'C_t > EMA5_t',
            ProbeCondition.HC10: 'C_t > HC10_t',
        }[self]


# bars of history before t (t included) each condition reads
PROBE_HISTORY = {ProbeCondition.C5: 6, ProbeCondition.EMA5: 5, ProbeCondition.HC10: 10}
EMA_PERIOD = 5
HC_PERIOD = 10


@dataclass(frozen=True)
class QClassThresholds:
    """Class separators on %Q: Up at >= up_min, Down at <= down_max."""

    up_min: float = 0.6
    down_max: float = 0.4

    def __post_init__(self):
        if not 0.0 < self.down_max < self.up_min < 1.0:
            raise LabelingError(
                f"QClass thresholds must satisfy 0 < down_max < up_min < 1, "
                f"got up_min={self.up_min}, down_max={self.down_max}"
            )


@dataclass(frozen=True)
class LabelVector:
    """One label per slice, with family metadata."""

    family: LabelFamily
    horizon: int
    values: np.ndarray
    end_indices: np.ndarray
    params: Dict[str, Any] = field(default_factory=dict)
    warnings: Tuple[str, ...] = ()

    def __post_init__(self):
        self.values.setflags(write=False)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def is_classifier(self) -> bool:
        return self.family in CLASS_COUNTS

    @property
    def class_count(self) -> int:
        return CLASS_COUNTS.get(self.family, 0)

    def histogram(self, bins: int = 10) -> Dict[str, int]:
        """Class counts for classifiers, equal-width bin counts otherwise."""
        if self.is_classifier:
            counts = np.bincount(self.values.astype(np.int64), minlength=self.class_count)
            return {str(c): int(n) for c, n in enumerate(counts)}
        counts, edges = np.histogram(self.values, bins=bins)
        return {f"[{edges[i]:.6g}, {edges[i + 1]:.6g}]": int(n) for i, n in enumerate(counts)}

    def to_dict(self) -> dict:
        return {
            'family': self.family.value,
            'horizon': self.horizon,
            'params': dict(self.params),
            'class_count': self.class_count or None,
            'histogram': self.histogram(),
            'warnings': list(self.warnings),
        }


def _prepare(closes: Sequence[float], end_indices: Sequence[int], horizon: int,
             min_horizon: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    closes = np.asarray(closes, dtype=np.float64)
    ends = np.asarray(end_indices, dtype=np.int64)
    if horizon < min_horizon:
        raise LabelingError(f"horizon must be >= {min_horizon}, got {horizon}")
    if ends.size and (ends.min() < 0 or ends.max() + horizon >= len(closes)):
        raise LabelingError(
            f"horizon {horizon} exceeds the reserved future window "
            f"(last end index {int(ends.max())}, {len(closes)} bars)"
        )
    return closes, ends


def _future_windows(values: np.ndarray, ends: np.ndarray, horizon: int) -> np.ndarray:
    """(K, horizon) matrix of values[t+1 .. t+horizon] per end index t."""
    return sliding_window_view(values, horizon)[ends + 1]


def label_nbar(closes: Sequence[float], end_indices: Sequence[int], horizon: int,
               family: Union[LabelFamily, str] = LabelFamily.NBAR_UPDOWN) -> LabelVector:
    """N-bar direction, price change or log return between C_t and C_{t+n}."""
    family = LabelFamily(family)
    if family not in NBAR_FAMILIES:
        raise LabelingError(f"'{family.value}' is not an N-bar label family")
    closes, ends = _prepare(closes, end_indices, horizon)
    now = closes[ends]
    later = closes[ends + horizon]
    if family is LabelFamily.NBAR_UPDOWN:
        values = (later > now).astype(np.int64)
    elif family is LabelFamily.NBAR_CHANGE:
        values = later - now
    else:
        values = np.log(later / now)
    return LabelVector(family, horizon, values, ends)


def label_ma(closes: Sequence[float], end_indices: Sequence[int], horizon: int,
             ma_period: int = 20) -> LabelVector:
    """1 if SMA_{t+n} > SMA_t else 0."""
    closes, ends = _prepare(closes, end_indices, horizon)
    average = sma(closes, ma_period).values
    now = average[ends]
    later = average[ends + horizon]
    if np.isnan(now).any() or np.isnan(later).any():
        raise LabelingError(f"SMA({ma_period}) undefined at some slice ends (need t >= {ma_period - 1})")
    values = (later > now).astype(np.int64)
    return LabelVector(LabelFamily.MA_UPDOWN, horizon, values, ends, params={'ma_period': ma_period})


def label_pctq(highs: Optional[Sequence[float]], lows: Optional[Sequence[float]],
               closes: Sequence[float], end_indices: Sequence[int], horizon: int) -> LabelVector:
    """%Q = (HH - C_t) / (HH - LL) over bars t+1 .. t+n, clamped to [0, 1].

    HH is the highest high and LL the lowest low of the future window. A flat
    window (HH == LL) reads 0.5. Without high/low channels the closes are used.
    """
    closes, ends = _prepare(closes, end_indices, horizon)
    warnings = []
    if highs is None or lows is None:
        message = "%Q computed from closes: no high/low channels"
        logger.warning(message)
        warnings.append(message)
        highs = lows = closes
    highs = np.asarray(highs, dtype=np.float64)
    lows = np.asarray(lows, dtype=np.float64)
    if highs.shape != closes.shape or lows.shape != closes.shape:
        raise LabelingError("highs, lows and closes must have the same length")
    if np.any(highs < lows):
        raise LabelingError("highs must be >= lows")

    hh = _future_windows(highs, ends, horizon).max(axis=1)
    ll = _future_windows(lows, ends, horizon).min(axis=1)
    spread = hh - ll
    flat = spread == 0.0
    with np.errstate(divide='ignore', invalid='ignore'):
        values = np.where(flat, 0.5, (hh - closes[ends]) / np.where(flat, 1.0, spread))
    values = np.clip(values, 0.0, 1.0)
    if flat.any():
        message = f"{int(flat.sum())} flat %Q window(s) set to 0.5"
        logger.warning(message)
        warnings.append(message)
    return LabelVector(LabelFamily.PCTQ, horizon, values, ends, warnings=tuple(warnings))


def label_qclass(pctq: LabelVector, thresholds: Optional[QClassThresholds] = None) -> LabelVector:
    """Discretize %Q: 0 Up (>= up_min), 1 Neutral, 2 Down (<= down_max)."""
    thresholds = thresholds or QClassThresholds()
    if pctq.family is not LabelFamily.PCTQ:
        raise LabelingError(f"QClass needs %Q labels, got {pctq.family.value}")
    q = np.asarray(pctq.values)
    values = np.where(q >= thresholds.up_min, 0, np.where(q <= thresholds.down_max, 2, 1)).astype(np.int64)
    return LabelVector(
        LabelFamily.QCLASS, pctq.horizon, values, pctq.end_indices.copy(),
        params={'up_min': thresholds.up_min, 'down_max': thresholds.down_max},
        warnings=pctq.warnings,
    )


def label_trend(closes: Sequence[float], end_indices: Sequence[int], horizon: int,
                method: Union[TrendMethod, str] = TrendMethod.REGRESSION,
                family: Union[LabelFamily, str] = LabelFamily.TREND_STRENGTH,
                ma_period: int = 20, direction_threshold: Optional[float] = None) -> LabelVector:
    """Trend strength (regressor) or direction (classifier) over (t, t+n].

    Methods:
        regression: OLS slope of closes[t+1..t+n] against bar number,
            divided by C_t
        ma_fraction: share of closes in (t, t+n] strictly above their SMA

    Direction is 1 when strength > direction_threshold (default 0 for
    regression, 0.5 for ma_fraction).
    """
    method = TrendMethod(method)
    family = LabelFamily(family)
    if family not in (LabelFamily.TREND_STRENGTH, LabelFamily.TREND_DIRECTION):
        raise LabelingError(f"'{family.value}' is not a trend label family")
    closes, ends = _prepare(closes, end_indices, horizon, min_horizon=2 if method is TrendMethod.REGRESSION else 1)
    window = _future_windows(closes, ends, horizon)
    params: Dict[str, Any] = {'method': method.value}

    if method is TrendMethod.REGRESSION:
        x = np.arange(horizon, dtype=np.float64)
        x_centered = x - x.mean()
        y_centered = window - window.mean(axis=1, keepdims=True)
        slope = (y_centered @ x_centered) / (x_centered @ x_centered)
        strength = slope / closes[ends]
        default_threshold = 0.0
    else:
        average = sma(closes, ma_period).values
        future_average = _future_windows(average, ends, horizon)
        if np.isnan(future_average).any():
            raise LabelingError(f"SMA({ma_period}) undefined inside some label windows")
        strength = (window > future_average).mean(axis=1)
        params['ma_period'] = ma_period
        default_threshold = 0.5

    if family is LabelFamily.TREND_STRENGTH:
        return LabelVector(family, horizon, strength, ends, params=params)
    threshold = default_threshold if direction_threshold is None else float(direction_threshold)
    params['direction_threshold'] = threshold
    return LabelVector(family, horizon, (strength > threshold).astype(np.int64), ends, params=params)


def label_probe_conditions(closes: Sequence[float], end_indices: Sequence[int],
                           condition: Union[ProbeCondition, str],
                           lookback: Optional[int] = None) -> LabelVector:
    """Binary within-slice price relationship at the slice end t.

    Conditions:
        c5: C_t > C_{t-5}
        ema5: C_t > EMA5_t
        hc10: C_t > highest close of bars [t-9, t-1] (current bar excluded)

    Args:
        closes: Unscaled closes
        end_indices: Slice end indices t
        condition: Which relationship to label
        lookback: When given, EMA5 is computed from the slice window
            [t-lookback+1, t] only (seeded at its start), so the label is a
            function of the slice contents

    Raises:
        LabelingError: Not enough history before some t
    """
    condition = ProbeCondition(condition)
    closes = np.asarray(closes, dtype=np.float64)
    ends = np.asarray(end_indices, dtype=np.int64)
    history = PROBE_HISTORY[condition]
    if lookback is not None and lookback < history:
        raise LabelingError(f"{condition.value} needs a lookback of at least {history}, got {lookback}")
    if ends.size and (ends.min() < history - 1 or ends.max() >= len(closes)):
        raise LabelingError(f"{condition.value} needs {history} bars of history at every slice end")

    current = closes[ends]
    if condition is ProbeCondition.C5:
        values = current > closes[ends - 5]
    elif condition is ProbeCondition.HC10:
        previous = sliding_window_view(closes, HC_PERIOD - 1)[ends - (HC_PERIOD - 1)]
        values = current > previous.max(axis=1)
    elif lookback is None:
        values = current > ema(closes, EMA_PERIOD).values[ends]
    else:
        values = current > _window_ema(sliding_window_view(closes, lookback)[ends - lookback + 1])

    params: Dict[str, Any] = {'condition': condition.value}
    if lookback is not None:
        params['lookback'] = lookback
    return LabelVector(LabelFamily.PROBE, 0, values.astype(np.int64), ends, params=params)


def _window_ema(windows: np.ndarray, period: int = EMA_PERIOD) -> np.ndarray:
    """EMA at the last column of each row, seeded with the SMA of the first ``period`` columns."""
    alpha = 2.0 / (period + 1)
    current = windows[:, :period].mean(axis=1)
    for column in range(period, windows.shape[1]):
        current = alpha * windows[:, column] + (1.0 - alpha) * current
    return current


def required_history(family: Union[LabelFamily, str], ma_period: int = 20,
                     trend_method: Union[TrendMethod, str] = TrendMethod.REGRESSION) -> int:
    """Bars up to and including t a label family reads before the slice end."""
    family = LabelFamily(family)
    if family is LabelFamily.MA_UPDOWN:
        return ma_period
    if family in (LabelFamily.TREND_STRENGTH, LabelFamily.TREND_DIRECTION) and \
            TrendMethod(trend_method) is TrendMethod.MA_FRACTION:
        return max(ma_period - 1, 1)
    return 1


def make_labels(family: Union[LabelFamily, str], closes: Sequence[float], end_indices: Sequence[int],
                horizon: int, highs: Optional[Sequence[float]] = None,
                lows: Optional[Sequence[float]] = None, ma_period: int = 20,
                thresholds: Optional[QClassThresholds] = None,
                trend_method: Union[TrendMethod, str] = TrendMethod.REGRESSION,
                direction_threshold: Optional[float] = None) -> LabelVector:
    """Compute any forward-looking label family from configuration values."""
    family = LabelFamily(family)
    if family in NBAR_FAMILIES:
        labels = label_nbar(closes, end_indices, horizon, family)
    elif family is LabelFamily.MA_UPDOWN:
        labels = label_ma(closes, end_indices, horizon, ma_period)
    elif family is LabelFamily.PCTQ:
        labels = label_pctq(highs, lows, closes, end_indices, horizon)
    elif family is LabelFamily.QCLASS:
        labels = label_qclass(label_pctq(highs, lows, closes, end_indices, horizon), thresholds)
    elif family in (LabelFamily.TREND_STRENGTH, LabelFamily.TREND_DIRECTION):
        labels = label_trend(closes, end_indices, horizon, trend_method, family, ma_period, direction_threshold)
    else:
        raise LabelingError(f"Family '{family.value}' is not a forward-looking label")
    logger.info(f"Labeled {len(labels)} slices with {family.value} (horizon {horizon})")
    return labels
