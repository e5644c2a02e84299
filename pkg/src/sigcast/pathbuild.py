"""From ragged observation tables to fully observed, time-augmented paths."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .sigcore import Path

logger = logging.getLogger(__name__)

WINDOW_TYPES = ("days", "ind", "expanding")
FILL_METHODS = ("ffill", "bfill", "rectilinear")


class ShortWindowWarning(UserWarning):
    """A window covers less history than its nominal length."""


class DegenerateFeatureWarning(UserWarning):
    """A feature had zero variance on the rows it was fitted on."""


def _as_time_index(index) -> pd.Index:
    if isinstance(index, pd.DatetimeIndex):
        return index
    try:
        return pd.Index(np.asarray(index, dtype=float))
    except (TypeError, ValueError):
        return pd.DatetimeIndex(pd.to_datetime(index))


def time_delta(a, b) -> float:
    """``b - a`` in days for timestamps, plain difference for real times."""
    if isinstance(a, (pd.Timestamp, np.datetime64)) or isinstance(b, (pd.Timestamp, np.datetime64)):
        return (pd.Timestamp(b) - pd.Timestamp(a)) / pd.Timedelta(days=1)
    return float(b) - float(a)


def shift_time(t, amount: float):
    if isinstance(t, (pd.Timestamp, np.datetime64)):
        return pd.Timestamp(t) + pd.Timedelta(days=amount)
    return float(t) + amount


@dataclass(frozen=True)
class TimeSeriesFrame:
    """Wide table of timestamped observations with a designated target column.

    ``data`` is indexed by strictly increasing timestamps (dates or reals);
    empty cells are NaN. A target value with reference time ``r`` counts as
    published from ``r + target_lag`` onwards.
    """

    data: pd.DataFrame
    target: str
    target_lag: float = 0.0

    def __post_init__(self):
        data = self.data.copy()
        data.index = _as_time_index(data.index)
        if not data.index.is_monotonic_increasing or data.index.has_duplicates:
            raise ValueError("timestamps must be strictly increasing")
        if self.target not in data.columns:
            raise ValueError(f"target column {self.target!r} not in frame")
        if len(data.columns) < 2:
            raise ValueError("frame needs at least one non-target column")
        if self.target_lag < 0:
            raise ValueError("target_lag must be >= 0")
        data = data.astype(float)
        object.__setattr__(self, "data", data)

    @property
    def index(self) -> pd.Index:
        return self.data.index

    @property
    def is_datetime(self) -> bool:
        return isinstance(self.data.index, pd.DatetimeIndex)

    @property
    def feature_columns(self) -> list[str]:
        return [c for c in self.data.columns if c != self.target]

    def target_series(self) -> pd.Series:
        """Observed target values indexed by reference time."""
        return self.data[self.target].dropna()

    def release_time(self, reference):
        return shift_time(reference, self.target_lag)

    def published_target(self, now) -> pd.Series:
        """Target values whose publication time is at or before ``now``."""
        y = self.target_series()
        if len(y) == 0:
            return y
        cutoff = shift_time(now, -self.target_lag)
        return y[y.index <= cutoff]

    def with_data(self, data: pd.DataFrame) -> "TimeSeriesFrame":
        return TimeSeriesFrame(data, self.target, self.target_lag)

    @classmethod
    def from_csv(cls, path, target: str, target_lag: float = 0.0) -> "TimeSeriesFrame":
        return cls(read_wide_csv(path), target, target_lag)


def read_wide_csv(path) -> pd.DataFrame:
    """Read the wide CSV format: first column ``date`` (ISO-8601 or real)."""
    df = pd.read_csv(path)
    if df.shape[1] < 2:
        raise ValueError(f"{path}: need a date column and at least one series")
    first = df.columns[0]
    if first != "date":
        raise ValueError(f"{path}: first column must be named 'date', got {first!r}")
    raw = df.pop("date")
    try:
        idx = pd.Index(raw.astype(float), name="date")
    except (TypeError, ValueError):
        idx = pd.DatetimeIndex(pd.to_datetime(raw), name="date")
    df.index = idx
    return df.apply(pd.to_numeric, errors="raise").astype(float)


def write_wide_csv(df: pd.DataFrame, path) -> None:
    out = df.copy()
    if isinstance(out.index, pd.DatetimeIndex):
        out.index = out.index.strftime("%Y-%m-%d")
    out.index.name = "date"
    out.to_csv(path, float_format="%.10g")


@dataclass(frozen=True)
class WindowSpec:
    window_type: str = "days"
    max_length: int | None = None

    def __post_init__(self):
        if self.window_type not in WINDOW_TYPES:
            raise ValueError(f"window_type={self.window_type!r} not in {WINDOW_TYPES}")
        if self.window_type != "expanding":
            if self.max_length is None or self.max_length < 1:
                raise ValueError(f"window_type={self.window_type!r} needs max_length >= 1")


def window_slice(data: pd.DataFrame, spec: WindowSpec, now) -> pd.DataFrame:
    """Rows visible in the lookback window ending at ``now`` (inclusive)."""
    idx = data.index
    if len(idx) == 0 or now < idx[0]:
        raise ValueError(f"nowcast time {now} precedes the data")
    upto = data[idx <= now]
    if spec.window_type == "expanding":
        out = upto
    elif spec.window_type == "ind":
        out = upto.iloc[-spec.max_length:]
        if len(upto) < spec.max_length:
            warnings.warn(
                f"window at {now} has {len(upto)} rows, fewer than {spec.max_length}",
                ShortWindowWarning,
                stacklevel=2,
            )
    else:
        start = shift_time(now, -spec.max_length)
        out = upto[upto.index > start]
        if time_delta(idx[0], now) < spec.max_length - 1:
            warnings.warn(
                f"window at {now} starts before the data begins",
                ShortWindowWarning,
                stacklevel=2,
            )
    if len(out) == 0:
        raise ValueError(f"empty window at {now}")
    return out


def window_time_scale(window: pd.DataFrame, spec: WindowSpec, now) -> tuple[object, float]:
    """Origin and unit of the time channel for this window."""
    if spec.window_type == "days":
        return shift_time(now, -spec.max_length), float(spec.max_length)
    origin = window.index[0]
    span = time_delta(origin, window.index[-1])
    return origin, span if span > 0 else 1.0


def fill_missing(values: pd.DataFrame, fill: str = "ffill") -> pd.DataFrame:
    """Forward fill (or back fill) with the other direction covering the ends."""
    empty = [c for c in values.columns if values[c].isna().all()]
    if empty:
        raise ValueError(f"channel(s) {', '.join(map(str, empty))} entirely missing in window")
    if fill == "bfill":
        return values.bfill().ffill()
    return values.ffill().bfill()


def build_path(
    window: pd.DataFrame,
    fill: str = "ffill",
    time_augment: bool = True,
    basepoint: bool = False,
    time_origin=None,
    time_unit: float = 1.0,
) -> Path:
    """Build a piecewise-linear path from a window of observations.

    Channels are the window's columns, preceded by a time channel when
    ``time_augment``. With ``rectilinear`` each change lands as a pure
    value jump after time has advanced at the previous value.
    """
    if fill not in FILL_METHODS:
        raise ValueError(f"fill={fill!r} not in {FILL_METHODS}")
    if len(window) == 0:
        raise ValueError("cannot build a path from an empty window")
    filled = fill_missing(window, "bfill" if fill == "bfill" else "ffill")
    vals = filled.to_numpy(dtype=float)
    origin = window.index[0] if time_origin is None else time_origin
    times = np.array([time_delta(origin, t) for t in window.index]) / time_unit

    if fill == "rectilinear" and len(vals) > 1:
        pts_t = [times[0]]
        pts_v = [vals[0]]
        for i in range(1, len(vals)):
            if np.any(vals[i] != vals[i - 1]):
                pts_t.append(times[i])
                pts_v.append(vals[i - 1])
            pts_t.append(times[i])
            pts_v.append(vals[i])
        times = np.array(pts_t)
        vals = np.array(pts_v)

    names = [str(c) for c in window.columns]
    if time_augment:
        vals = np.column_stack([times, vals])
        names = ["t"] + names
    if basepoint:
        vals = np.vstack([np.zeros(vals.shape[1]), vals])
        times = np.concatenate([[times[0]], times])
    if len(vals) < 2:
        # a single observation is a constant path
        vals = np.vstack([vals, vals])
        times = np.concatenate([times, times])
    return Path(vals, times=times, names=tuple(names))


class Standardizer(TransformerMixin, BaseEstimator):
    """Column centering and scaling with the population (divide-by-n) variance.

    Zero-variance columns keep scale 1, so they standardize to zeros; their
    indices are recorded in ``degenerate_``.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if X.shape[0] < 2:
            raise ValueError("standardizer needs at least 2 rows")
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        tiny = scale <= 1e-12 * np.maximum(1.0, np.abs(self.mean_))
        scale[tiny] = 1.0
        self.scale_ = scale
        self.degenerate_ = np.flatnonzero(tiny)
        self.n_features_in_ = X.shape[1]
        if tiny.any():
            warnings.warn(
                f"{tiny.sum()} zero-variance feature(s) passed through centered",
                DegenerateFeatureWarning,
                stacklevel=2,
            )
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        return np.asarray(X, dtype=float) * self.scale_ + self.mean_


def fit_standardizer(features) -> Standardizer:
    return Standardizer().fit(features)


def apply_standardizer(s: Standardizer, features) -> np.ndarray:
    return s.transform(features)
