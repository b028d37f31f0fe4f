"""tslab - financial time-series dataset builder.

Turns raw OHLCV history into stationarity-checked, per-slice scaled,
leakage-free labeled datasets, with a small trainable probe that checks the
scaling keeps simple price relationships learnable.
"""

__version__ = "0.1.0"
