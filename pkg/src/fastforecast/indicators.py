"""Technical indicators over OHLCV candle series.

Five indicators feed the forecasting model: simple and exponential moving
averages, Bollinger Bands, the relative strength index and the commodity
channel index.  Each indicator returns full-length values plus an explicit
``valid_from`` offset; entries before the offset are warm-up filler (zeros)
and must never be read.  No NaN sentinel enters the numeric path.

Conventions (documented so the test oracles agree):
  * EMA is seeded with the n-period SMA at index n-1, then
    ``ema[i] = (p[i] - ema[i-1]) * k + ema[i-1]`` with ``k = 2/(n+1)``.
  * Bollinger bands use the population standard deviation (divide by n).
  * RSI uses plain n-period means of gains and losses; zero average loss
    maps to 100, zero average gain to 0.
  * CCI outputs 0 where the mean absolute deviation is 0 (flat window).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class OhlcvSeries:
    """Time-ordered candles with a fixed interval between timestamps.

    Timestamps are epoch seconds, strictly increasing with constant spacing
    equal to ``interval``; candle bounds (high/low envelope) are enforced.
    """

    interval: int
    timestamps: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        n = len(self.timestamps)
        for name in ("open", "high", "low", "close", "volume"):
            if len(getattr(self, name)) != n:
                raise DataError(f"column '{name}' length differs from timestamps")
        if self.interval <= 0:
            raise DataError("interval must be positive")
        if n >= 2:
            deltas = np.diff(self.timestamps)
            if not np.all(deltas == self.interval):
                raise DataError("timestamps must increase by exactly one interval")
        for arr in (self.open, self.high, self.low, self.close, self.volume):
            if not np.all(np.isfinite(arr)):
                raise DataError("non-finite value in candle data")
        if np.any(self.high < np.maximum(self.open, self.close)) or \
                np.any(self.low > np.minimum(self.open, self.close)):
            raise DataError("candle violates high/low envelope")
        if np.any(self.volume < 0):
            raise DataError("negative volume")

    def __len__(self) -> int:
        return len(self.timestamps)


@dataclass(frozen=True)
class IndicatorParams:
    """Window lengths for the five indicators (conventional defaults)."""

    sma_n: int = 14
    ema_n: int = 14
    bb_n: int = 20
    bb_k: float = 2.0
    rsi_n: int = 14
    cci_n: int = 20

    def __post_init__(self):
        for name in ("sma_n", "ema_n", "bb_n", "rsi_n", "cci_n"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1")
        if self.bb_k <= 0:
            raise DataError("bb_k must be positive")
        if self.bb_n < 2 or self.cci_n < 2:
            raise DataError("bb_n and cci_n need at least a 2-point window")

    @property
    def warmup(self) -> int:
        return max(self.sma_n - 1, self.ema_n - 1, self.bb_n - 1,
                   self.rsi_n, self.cci_n - 1)


@dataclass
class IndicatorSeries:
    """Full-length indicator values with the first valid index."""

    values: np.ndarray
    valid_from: int

    def valid(self) -> np.ndarray:
        return self.values[self.valid_from:]


def _check_window(prices: np.ndarray, n: int, needed: int) -> None:
    if n < 1:
        raise DataError("window must be >= 1")
    if len(prices) < needed:
        raise DataError(f"need at least {needed} points, got {len(prices)}")


def sma(prices: np.ndarray, n: int) -> IndicatorSeries:
    """n-period simple moving average; valid from index n-1."""
    prices = np.asarray(prices, dtype=np.float64)
    _check_window(prices, n, n)
    out = np.zeros_like(prices)
    out[n - 1:] = np.convolve(prices, np.ones(n), mode="valid") / n
    return IndicatorSeries(out, n - 1)


def ema(prices: np.ndarray, n: int) -> IndicatorSeries:
    """n-period exponential moving average, SMA-seeded, k = 2/(n+1)."""
    prices = np.asarray(prices, dtype=np.float64)
    _check_window(prices, n, n)
    k = 2.0 / (n + 1.0)
    out = np.zeros_like(prices)
    out[n - 1] = prices[:n].mean()
    for i in range(n, len(prices)):
        out[i] = (prices[i] - out[i - 1]) * k + out[i - 1]
    return IndicatorSeries(out, n - 1)


@dataclass
class BollingerBands:
    mid: IndicatorSeries
    upper: IndicatorSeries
    lower: IndicatorSeries


def bollinger(prices: np.ndarray, n: int, k: float = 2.0) -> BollingerBands:
    """Middle band = SMA(n); outer bands at k population standard deviations."""
    prices = np.asarray(prices, dtype=np.float64)
    if n < 2:
        raise DataError("bollinger needs n >= 2")
    _check_window(prices, n, n)
    mid = sma(prices, n)
    upper = np.zeros_like(prices)
    lower = np.zeros_like(prices)
    for i in range(n - 1, len(prices)):
        window = prices[i - n + 1:i + 1]
        # two-pass population std: immune to cancellation at large price scales
        dev = window - window.mean()
        std = np.sqrt((dev * dev).mean())
        upper[i] = mid.values[i] + k * std
        lower[i] = mid.values[i] - k * std
    return BollingerBands(mid, IndicatorSeries(upper, n - 1), IndicatorSeries(lower, n - 1))


def rsi(prices: np.ndarray, n: int) -> IndicatorSeries:
    """Relative strength index in [0, 100]; valid from index n."""
    prices = np.asarray(prices, dtype=np.float64)
    _check_window(prices, n, n + 1)
    deltas = np.diff(prices)
    gains = np.maximum(deltas, 0.0)
    losses = np.maximum(-deltas, 0.0)
    out = np.zeros_like(prices)
    for i in range(n, len(prices)):
        avg_gain = gains[i - n:i].mean()
        avg_loss = losses[i - n:i].mean()
        if avg_loss == 0.0:
            out[i] = 100.0
        elif avg_gain == 0.0:
            out[i] = 0.0
        else:
            rs = avg_gain / avg_loss
            out[i] = 100.0 - 100.0 / (1.0 + rs)
    return IndicatorSeries(out, n)


def typical_price(high: np.ndarray, low: np.ndarray, close: np.ndarray) -> np.ndarray:
    return (np.asarray(high, dtype=np.float64) + np.asarray(low, dtype=np.float64)
            + np.asarray(close, dtype=np.float64)) / 3.0


def cci(series: OhlcvSeries, n: int) -> IndicatorSeries:
    """Commodity channel index over the typical price; 0 where the window is flat."""
    if n < 2:
        raise DataError("cci needs n >= 2")
    tp = typical_price(series.high, series.low, series.close)
    _check_window(tp, n, n)
    out = np.zeros_like(tp)
    for i in range(n - 1, len(tp)):
        window = tp[i - n + 1:i + 1]
        ma = window.mean()
        dev = np.abs(window - ma).mean()
        if dev == 0.0:
            out[i] = 0.0
        else:
            out[i] = (tp[i] - ma) / (0.015 * dev)
    return IndicatorSeries(out, n - 1)


FEATURE_COLUMNS = ("close", "sma", "ema", "bb_mid", "bb_upper", "bb_lower", "rsi", "cci")
RAW_COLUMNS = ("open", "high", "low", "close", "volume")


@dataclass
class FeatureMatrix:
    """Per-timestep model inputs with a validity offset for warm-up rows."""

    columns: tuple
    values: np.ndarray
    warmup: int

    def valid_values(self) -> np.ndarray:
        return self.values[self.warmup:]


def build_features(series: OhlcvSeries, params: IndicatorParams) -> FeatureMatrix:
    """Assemble the eight-column feature matrix from close prices and candles."""
    warm = params.warmup
    if len(series) <= warm:
        raise DataError(f"series of {len(series)} rows shorter than warm-up {warm}")
    close = np.asarray(series.close, dtype=np.float64)
    s = sma(close, params.sma_n)
    e = ema(close, params.ema_n)
    bb = bollinger(close, params.bb_n, params.bb_k)
    r = rsi(close, params.rsi_n)
    c = cci(series, params.cci_n)
    values = np.column_stack([
        close, s.values, e.values, bb.mid.values,
        bb.upper.values, bb.lower.values, r.values, c.values,
    ])
    return FeatureMatrix(FEATURE_COLUMNS, values, warm)


def raw_features(series: OhlcvSeries) -> FeatureMatrix:
    """OHLCV columns only (the indicator-free model input); no warm-up."""
    values = np.column_stack([
        series.open, series.high, series.low, series.close, series.volume,
    ]).astype(np.float64)
    return FeatureMatrix(RAW_COLUMNS, values, 0)
