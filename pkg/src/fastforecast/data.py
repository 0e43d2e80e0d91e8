"""CSV ingestion, window datasets, normalization and the evaluation metrics.

Input CSV format: header ``timestamp,open,high,low,close,volume``, integer
epoch-second timestamps, ``.`` decimal separator, UTF-8.  Rows must be
strictly increasing in time; a spacing larger than the declared interval is
a gap — the series is split at gaps and the longest contiguous segment is
kept (one warning logged per gap).  Duplicate or decreasing timestamps are
rejected outright with the offending line number.

Dataset construction slides a length-L window over the valid (post warm-up)
feature rows; the target is the next close.  The split is chronological and
the per-column z-score statistics are fitted on training rows only, so no
information from validation or test rows leaks into the transform.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .indicators import (
    FeatureMatrix,
    IndicatorParams,
    OhlcvSeries,
    build_features,
    raw_features,
)

logger = logging.getLogger("fastforecast.data")

INTERVALS = {"hourly": 3600, "daily": 86400}

CSV_HEADER = ["timestamp", "open", "high", "low", "close", "volume"]


def parse_interval(value) -> int:
    if isinstance(value, str):
        if value not in INTERVALS:
            raise DataError(f"unknown interval '{value}' (use hourly/daily or seconds)")
        return INTERVALS[value]
    iv = int(value)
    if iv <= 0:
        raise DataError("interval must be positive")
    return iv


def load_csv(path, interval) -> OhlcvSeries:
    """Parse an OHLCV CSV into a gap-free series.

    Keeps the longest contiguous segment when the file contains gaps; raises
    :class:`DataError` (with the line number) for malformed rows, duplicate
    or decreasing timestamps, and empty files.
    """
    interval = parse_interval(interval)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if [h.strip().lower() for h in header] != CSV_HEADER:
            raise DataError(f"{path}: header {header} != {CSV_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            try:
                ts = int(row[0])
                vals = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            rows.append((lineno, ts, vals))
    if not rows:
        raise DataError(f"{path}: no data rows")

    # split into contiguous segments at gaps; reject non-increasing stamps
    segments = [[rows[0]]]
    for prev, cur in zip(rows, rows[1:]):
        delta = cur[1] - prev[1]
        if delta <= 0:
            kind = "duplicate" if delta == 0 else "decreasing"
            raise DataError(f"{path}:{cur[0]}: {kind} timestamp {cur[1]}")
        if delta != interval:
            logger.warning("%s:%d: gap of %ds (expected %ds); splitting series",
                           path, cur[0], delta, interval)
            segments.append([])
        segments[-1].append(cur)

    best = max(segments, key=len)
    if len(segments) > 1:
        dropped = len(rows) - len(best)
        logger.info("kept longest segment of %d rows (%d rows dropped)", len(best), dropped)

    ts = np.array([r[1] for r in best], dtype=np.int64)
    cols = np.array([r[2] for r in best], dtype=np.float64)
    try:
        return OhlcvSeries(interval, ts, cols[:, 0], cols[:, 1], cols[:, 2],
                           cols[:, 3], cols[:, 4])
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# normalization and datasets
# ---------------------------------------------------------------------------

@dataclass
class ColumnStats:
    """Per-column affine statistics; the target uses the close column's pair."""

    columns: tuple
    mean: np.ndarray
    std: np.ndarray
    target_index: int

    def normalize(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean

    def normalize_target(self, y):
        return (np.asarray(y) - self.mean[self.target_index]) / self.std[self.target_index]

    def denormalize_target(self, y):
        return np.asarray(y) * self.std[self.target_index] + self.mean[self.target_index]

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "mean": self.mean.tolist(),
                "std": self.std.tolist(), "target_index": self.target_index}

    @staticmethod
    def from_dict(d: dict) -> "ColumnStats":
        return ColumnStats(tuple(d["columns"]), np.asarray(d["mean"], dtype=np.float64),
                           np.asarray(d["std"], dtype=np.float64), int(d["target_index"]))


@dataclass
class SplitRanges:
    train: range
    validation: range
    test: range

    def named(self) -> dict:
        return {"train": self.train, "validation": self.validation, "test": self.test}


@dataclass
class Dataset:
    """Sliding windows (normalized) with chronological train/val/test ranges."""

    windows: np.ndarray  # (N, L, F) normalized
    targets: np.ndarray  # (N,) normalized next close
    raw_targets: np.ndarray  # (N,) price-scale next close
    target_times: np.ndarray  # (N,) epoch seconds of the predicted candle
    columns: tuple
    split: SplitRanges
    norm: ColumnStats

    def windows_for(self, split_name: str):
        r = self.split.named()[split_name]
        return self.windows[r.start:r.stop], self.targets[r.start:r.stop]

    @property
    def window_length(self) -> int:
        return self.windows.shape[1]

    @property
    def n_features(self) -> int:
        return self.windows.shape[2]


def make_dataset(series: OhlcvSeries, params: IndicatorParams, window: int,
                 split_fractions=(0.70, 0.15, 0.15),
                 use_indicators: bool = True) -> Dataset:
    """Build normalized sliding windows with a chronological split."""
    if window < 1:
        raise DataError("window length must be >= 1")
    if len(split_fractions) != 3 or abs(sum(split_fractions) - 1.0) > 1e-9:
        raise DataError("split fractions must be three values summing to 1")
    fm: FeatureMatrix = build_features(series, params) if use_indicators else raw_features(series)
    valid = fm.values[fm.warmup:]
    times = series.timestamps[fm.warmup:]
    close_idx = fm.columns.index("close")
    n_windows = len(valid) - window
    if n_windows < 1:
        raise DataError(
            f"need at least warm-up + window + 1 = {fm.warmup + window + 1} rows, "
            f"got {len(series)}")

    # validation/test may come out empty for very short series; training
    # always gets at least one window
    n_train = max(1, int(np.floor(split_fractions[0] * n_windows)))
    n_val = min(int(np.floor(split_fractions[1] * n_windows)), n_windows - n_train)
    split = SplitRanges(range(0, n_train), range(n_train, n_train + n_val),
                        range(n_train + n_val, n_windows))

    # statistics from rows visible to training only: feature rows of train
    # windows plus their targets, i.e. valid rows [0, n_train + window)
    train_rows = valid[:n_train + window]
    mean = train_rows.mean(axis=0)
    std = train_rows.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)  # constant columns map to 0
    norm = ColumnStats(fm.columns, mean, std, close_idx)

    normalized = norm.normalize(valid)
    windows = np.stack([normalized[s:s + window] for s in range(n_windows)])
    raw_targets = valid[window:window + n_windows, close_idx].copy()
    targets = norm.normalize_target(raw_targets)
    target_times = times[window:window + n_windows].copy()
    return Dataset(windows, targets, raw_targets, target_times, fm.columns, split, norm)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _pair(y, y_hat):
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise DataError(f"metric inputs must be equal-length vectors, got {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise DataError("metric inputs are empty")
    return y, y_hat


def mse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    d = y - y_hat
    return float(np.mean(d * d))


def rmse(y, y_hat) -> float:
    return float(np.sqrt(mse(y, y_hat)))


def r_square(y, y_hat) -> float:
    """1 - Var(y - y_hat)/Var(y), population variances.

    This is the variance-ratio form, which matches the conventional
    coefficient of determination only when the residuals have zero mean.
    """
    y, y_hat = _pair(y, y_hat)
    if y.size < 2:
        raise DataError("r_square needs at least two points")
    var_y = float(np.var(y))
    if var_y == 0.0:
        raise DataError("r_square undefined for constant y")
    return 1.0 - float(np.var(y - y_hat)) / var_y


def msle(y, y_hat) -> float:
    """Mean of (log(y+1) - log(y_hat+1))^2; needs all values > -1."""
    y, y_hat = _pair(y, y_hat)
    if np.any(y <= -1.0) or np.any(y_hat <= -1.0):
        raise DataError("msle requires all values > -1")
    d = np.log1p(y) - np.log1p(y_hat)
    return float(np.mean(d * d))


@dataclass
class MetricSet:
    mse: float
    rmse: float
    r_square: float
    msle: float

    def to_dict(self) -> dict:
        # fixed emission order: MSE, RMSE, R-Square, MSLE
        return {"MSE": self.mse, "RMSE": self.rmse,
                "R-Square": self.r_square, "MSLE": self.msle}


def evaluate_metrics(y, y_hat) -> MetricSet:
    return MetricSet(mse(y, y_hat), rmse(y, y_hat), r_square(y, y_hat), msle(y, y_hat))


# ---------------------------------------------------------------------------
# prediction CSV round-trip
# ---------------------------------------------------------------------------

PREDICTION_HEADER = ["timestamp", "actual", "predicted"]


def write_predictions(path, timestamps, actual, predicted) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTION_HEADER)
        for ts, a, p in zip(timestamps, actual, predicted):
            writer.writerow([int(ts), repr(float(a)), repr(float(p))])


def read_predictions(path):
    times, actual, predicted = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PREDICTION_HEADER:
            raise DataError(f"{path}: bad prediction header {header}")
        for row in reader:
            times.append(int(row[0]))
            actual.append(float(row[1]))
            predicted.append(float(row[2]))
    return (np.asarray(times, dtype=np.int64), np.asarray(actual, dtype=np.float64),
            np.asarray(predicted, dtype=np.float64))
