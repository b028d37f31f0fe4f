"""OHLCV ingestion, validation and return series."""

import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from dateutil import parser as date_parser

from .errors import DataError, DataValidationError, SeriesTooShortError

logger = logging.getLogger(__name__)

PRICE_FIELDS = ('open', 'high', 'low', 'close')


class ReturnKind(str, Enum):
    """Return definition applied to closes."""

    SIMPLE = 'simple'
    LOG = 'log'


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for OHLCV CSV files.

    Only ``timestamp`` and ``close`` are mandatory. Missing open/high/low
    columns are filled from the close; a missing volume column is stored as
    absent, never as zero.
    """

    timestamp: str = 'date'
    open: Optional[str] = 'open'
    high: Optional[str] = 'high'
    low: Optional[str] = 'low'
    close: str = 'close'
    volume: Optional[str] = 'volume'
    delimiter: str = ','

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> 'CsvSchema':
        """Create schema from a config mapping, keeping defaults for absent keys."""
        data = dict(data or {})
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class Bar:
    """One OHLCV bar."""

    timestamp: datetime
    open: float
    high: float
    low: float
    close: float
    volume: Optional[float] = None

    def problems(self) -> List[str]:
        """Return the bar invariants this bar violates."""
        issues = []
        prices = (self.open, self.high, self.low, self.close)
        if any(not math.isfinite(p) for p in prices):
            issues.append("non-finite price")
            return issues
        if any(p <= 0 for p in prices):
            issues.append("non-positive price")
        if self.high < self.low:
            issues.append("high < low")
        if self.low > min(self.open, self.close):
            issues.append("low above open/close")
        if self.high < max(self.open, self.close):
            issues.append("high below open/close")
        if self.volume is not None and (not math.isfinite(self.volume) or self.volume < 0):
            issues.append("negative volume")
        return issues


@dataclass(frozen=True)
class BarSeries:
    """Ordered, validated bars of one instrument."""

    symbol: str
    bars: Tuple[Bar, ...]
    has_high_low: bool = True
    _arrays: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'bars', tuple(self.bars))
        for previous, current in zip(self.bars, self.bars[1:]):
            if current.timestamp <= previous.timestamp:
                raise DataError(
                    f"{self.symbol}: timestamps must be strictly increasing "
                    f"({previous.timestamp.isoformat()} then {current.timestamp.isoformat()})"
                )

    def __len__(self) -> int:
        return len(self.bars)

    @property
    def has_volume(self) -> bool:
        return bool(self.bars) and all(bar.volume is not None for bar in self.bars)

    @property
    def timestamps(self) -> List[datetime]:
        return [bar.timestamp for bar in self.bars]

    def _column(self, name: str) -> np.ndarray:
        cached = self._arrays.get(name)
        if cached is None:
            if name == 'volume':
                values = [np.nan if bar.volume is None else bar.volume for bar in self.bars]
            else:
                values = [getattr(bar, name) for bar in self.bars]
            cached = np.asarray(values, dtype=np.float64)
            cached.setflags(write=False)
            self._arrays[name] = cached
        return cached

    def channel(self, name: str) -> np.ndarray:
        """Get a bar-aligned channel by name.

        Args:
            name: One of open, high, low, close, volume, returns, log_returns

        Returns:
            Read-only float64 array of the series length. Return channels hold
            the move from t-1 to t at index t, with index 0 undefined (NaN).
        """
        if name in PRICE_FIELDS:
            return self._column(name)
        if name == 'volume':
            if not self.has_volume:
                raise DataError(f"{self.symbol}: series has no volume channel")
            return self._column('volume')
        if name in ('returns', 'log_returns'):
            kind = ReturnKind.SIMPLE if name == 'returns' else ReturnKind.LOG
            aligned = np.concatenate([[np.nan], to_returns(self, kind).values])
            aligned.setflags(write=False)
            return aligned
        raise DataError(f"Unknown channel '{name}'")

    def available_channels(self) -> List[str]:
        names = list(PRICE_FIELDS)
        if self.has_volume:
            names.append('volume')
        return names + ['returns', 'log_returns']


@dataclass(frozen=True)
class ReturnSeries:
    """Returns r_0 ... r_{T-2} of a bar series."""

    values: np.ndarray
    kind: ReturnKind

    def __len__(self) -> int:
        return len(self.values)


def _parse_timestamp(raw: str) -> datetime:
    try:
        return date_parser.isoparse(raw)
    except ValueError:
        return date_parser.parse(raw)


def _parse_float(raw: str) -> float:
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value '{raw}'")
    return value


def load_csv(path: Union[str, Path], schema: Optional[CsvSchema] = None,
             symbol: Optional[str] = None) -> BarSeries:
    """Load and validate OHLCV history from a CSV file.

    Args:
        path: CSV file with a header row
        schema: Column mapping (defaults to date,open,high,low,close,volume)
        symbol: Instrument identifier (defaults to the file stem)

    Returns:
        BarSeries sorted by timestamp

    Raises:
        DataError: Missing file or required column
        DataValidationError: Unparseable rows, duplicate timestamps or rows
            violating the bar invariants (row numbers are 1-based data rows)
    """
    path = Path(path)
    schema = schema or CsvSchema()
    if not path.exists():
        raise DataError(f"Input file not found: {path}")

    try:
        frame = pd.read_csv(path, sep=schema.delimiter, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: no data rows")
    except pd.errors.ParserError as e:
        # pandas counts file lines; data rows start after the header
        match = re.search(r'line (\d+)', str(e))
        rows = [int(match.group(1)) - 1] if match else []
        where = f"row {rows[0]}" if rows else "a row"
        raise DataValidationError(str(path), [f"{where}: unparseable ({e})"], rows)
    frame.columns = [str(c).strip() for c in frame.columns]

    for role, column in (('timestamp', schema.timestamp), ('close', schema.close)):
        if column not in frame.columns:
            raise DataError(f"{path}: required {role} column '{column}' not found")

    def optional_column(column: Optional[str]) -> Optional[str]:
        if column and column in frame.columns:
            return column
        return None

    open_col = optional_column(schema.open)
    high_col = optional_column(schema.high)
    low_col = optional_column(schema.low)
    volume_col = optional_column(schema.volume)
    has_high_low = high_col is not None and low_col is not None
    if not has_high_low:
        logger.info(f"{path}: no high/low columns, closes stand in for the bar range")
    if volume_col is None:
        logger.info(f"{path}: no volume column, volume stored as absent")

    parsed: List[Tuple[int, Bar]] = []
    problems: List[str] = []
    bad_rows: List[int] = []

    for row_number, record in enumerate(frame.to_dict('records'), start=1):
        try:
            close = _parse_float(record[schema.close])
            bar = Bar(
                timestamp=_parse_timestamp(record[schema.timestamp].strip()),
                open=_parse_float(record[open_col]) if open_col else close,
                high=_parse_float(record[high_col]) if high_col else close,
                low=_parse_float(record[low_col]) if low_col else close,
                close=close,
                volume=_parse_float(record[volume_col]) if volume_col and record[volume_col].strip() else None,
            )
        except (ValueError, TypeError, OverflowError) as e:
            problems.append(f"row {row_number}: unparseable ({e})")
            bad_rows.append(row_number)
            continue

        issues = bar.problems()
        if issues:
            problems.append(f"row {row_number}: {', '.join(issues)}")
            bad_rows.append(row_number)
            continue
        parsed.append((row_number, bar))

    if problems:
        raise DataValidationError(str(path), problems, bad_rows)
    if not parsed:
        raise DataError(f"{path}: no data rows")

    parsed.sort(key=lambda item: item[1].timestamp)
    for (row_a, bar_a), (row_b, bar_b) in zip(parsed, parsed[1:]):
        if bar_a.timestamp == bar_b.timestamp:
            problems.append(f"rows {row_a} and {row_b}: duplicate timestamp {bar_b.timestamp.isoformat()}")
            bad_rows.extend([row_a, row_b])
    if problems:
        raise DataValidationError(str(path), problems, bad_rows)

    series = BarSeries(symbol=symbol or path.stem, bars=tuple(bar for _, bar in parsed),
                       has_high_low=has_high_low)
    logger.info(f"Loaded {len(series)} bars for {series.symbol} from {path}")
    return series


def close_vector(series: BarSeries) -> np.ndarray:
    """Closes in timestamp order."""
    return series.channel('close')


def to_returns(series: BarSeries, kind: Union[ReturnKind, str] = ReturnKind.SIMPLE) -> ReturnSeries:
    """Compute close-to-close returns.

    Args:
        series: Source bars (at least 2)
        kind: simple (close[t+1]/close[t] - 1) or log (ln of the ratio)

    Returns:
        ReturnSeries of length len(series) - 1
    """
    kind = ReturnKind(kind)
    if len(series) < 2:
        raise SeriesTooShortError(len(series), 2, what=f"{series.symbol} bar series")
    closes = close_vector(series)
    ratio = closes[1:] / closes[:-1]
    values = np.log(ratio) if kind is ReturnKind.LOG else ratio - 1.0
    values.setflags(write=False)
    return ReturnSeries(values=values, kind=kind)


def reconstruct_closes(close0: float, returns: ReturnSeries) -> np.ndarray:
    """Rebuild closes from the first close and a return series."""
    if returns.kind is ReturnKind.LOG:
        growth = np.exp(np.cumsum(returns.values))
    else:
        growth = np.cumprod(1.0 + np.asarray(returns.values))
    return np.concatenate([[close0], close0 * growth])


def bars_from_closes(closes: Sequence[float], symbol: str = 'SYNTH',
                     start: Optional[datetime] = None) -> BarSeries:
    """Build a daily bar series whose open/high/low equal the close."""
    start = start or datetime(2000, 1, 3)
    index = pd.date_range(start, periods=len(closes), freq='D')
    bars = tuple(
        Bar(timestamp=ts.to_pydatetime(), open=float(c), high=float(c), low=float(c), close=float(c))
        for ts, c in zip(index, closes)
    )
    return BarSeries(symbol=symbol, bars=bars, has_high_low=False)
