import numpy as np
import pandas as pd
import pytest


def make_random_walk(length, seed=0, start=100.0, volatility=0.01):
    rng = np.random.default_rng(seed)
    return start * np.exp(np.cumsum(volatility * rng.standard_normal(length)))


def write_ohlcv_csv(path, closes, seed=0, with_volume=True):
    """Write a consistent OHLCV CSV whose closes are ``closes``."""
    rng = np.random.default_rng(seed + 1)
    closes = np.asarray(closes, dtype=float)
    opens = np.concatenate([[closes[0]], closes[:-1]])
    highs = np.maximum(opens, closes) * (1.0 + 0.005 * rng.random(len(closes)))
    lows = np.minimum(opens, closes) * (1.0 - 0.005 * rng.random(len(closes)))
    frame = pd.DataFrame({
        'date': pd.date_range('2010-01-04', periods=len(closes), freq='D').strftime('%Y-%m-%d'),
        'open': opens,
        'high': highs,
        'low': lows,
        'close': closes,
    })
    if with_volume:
        frame['volume'] = rng.integers(1_000, 100_000, len(closes))
    frame.to_csv(path, index=False, float_format='%.10f')
    return path


@pytest.fixture
def random_walk():
    return make_random_walk


@pytest.fixture
def ohlcv_csv(tmp_path):
    return write_ohlcv_csv(tmp_path / "SPY.csv", make_random_walk(500, seed=7), seed=7)
