"""Signature nowcasting: per-time model fitting, grid search over a
validation period and walk-forward evaluation on a test period.

Timing conventions
------------------
A target value with reference time ``r`` is published at ``r + target_lag``.
A nowcast made at time ``t`` estimates the earliest target not yet published
at ``t``. Training pairs are release aligned: the target with reference
``r`` is paired with the signature of the window ending at the last frame
timestamp strictly before its publication, and with the latest target value
published by then. Indicator columns are taken as known at their
timestamps; the target column never enters the path.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import re
import warnings
from dataclasses import dataclass, field, fields, replace
from itertools import product
from pathlib import Path as FsPath
from typing import Any

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .factors import GroupPCA
from .pathbuild import (
    FILL_METHODS,
    WINDOW_TYPES,
    ShortWindowWarning,
    TimeSeriesFrame,
    WindowSpec,
    build_path,
    fill_missing,
    shift_time,
    time_delta,
    window_slice,
    window_time_scale,
)
from .regress import (
    REGULARIZERS,
    DesignRecipe,
    SigRegressionModel,
    ar1_forecast,
    design_from_terms,
    fit_ar1,
    fit_sig_model,
)
from .sigcore import KEEP_MODES, filter_terms, retained_words, signature, word_label

logger = logging.getLogger(__name__)

THREADS_ENV = "SIGCAST_THREADS"

HYPER_KEYS = (
    "window_type", "max_length", "fill_method", "level", "t_level", "basepoint",
    "use_multiplier", "keep_sigs", "regularize", "alpha", "l1_ratio", "fit_intercept",
    "use_prev_value", "standardize", "reduce_dim", "k",
)


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, reason: str):
        super().__init__(f"{key}: {reason}")
        self.key = key


@dataclass(frozen=True)
class NowcastConfig:
    """Pipeline settings. Any key in ``HYPER_KEYS`` may hold a tuple of
    candidate values, which makes it a grid-search axis."""

    target: str
    window_type: Any = "days"
    max_length: Any = 365
    fill_method: Any = "ffill"
    level: Any = 2
    t_level: Any = None
    basepoint: Any = False
    use_multiplier: Any = False
    keep_sigs: Any = "all"
    regularize: Any = "elastic_net"
    alpha: Any = 1.0
    l1_ratio: Any = 0.5
    fit_intercept: Any = True
    use_prev_value: Any = False
    standardize: Any = True
    reduce_dim: Any = False
    k: Any = 1
    target_lag: float = 0.0
    training_proportion: float | None = None
    validation_start: Any = None
    test_start: Any = None
    test_end: Any = None
    recursive: bool = True
    columns: tuple[str, ...] | None = None
    factors: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        validate_config(self)

    @property
    def grid_axes(self) -> dict[str, tuple]:
        return {k: getattr(self, k) for k in HYPER_KEYS if isinstance(getattr(self, k), tuple)}

    @property
    def is_grid(self) -> bool:
        return bool(self.grid_axes)

    def grid(self) -> list["NowcastConfig"]:
        """Concrete configs, axes varied in field order (last axis fastest)."""
        axes = self.grid_axes
        if not axes:
            return [self]
        keys = list(axes)
        return [replace(self, **dict(zip(keys, combo))) for combo in product(*axes.values())]

    def factor_structure(self) -> dict[str, Any]:
        return {name: cols for name, cols in self.factors}

    def recipe(self) -> DesignRecipe:
        self._require_concrete()
        return DesignRecipe(
            keep_sigs=self.keep_sigs,
            level=self.level,
            t_level=self.t_level,
            use_prev_value=self.use_prev_value,
            use_multiplier=self.use_multiplier,
            fit_intercept=self.fit_intercept,
        )

    def window_spec(self) -> WindowSpec:
        self._require_concrete()
        return WindowSpec(self.window_type, self.max_length)

    def penalty(self) -> tuple[str, float, float]:
        return self.regularize, float(self.alpha), float(self.l1_ratio)

    def params_hash(self) -> str:
        return hashlib.sha256(format_config(self).encode("utf-8")).hexdigest()[:12]

    def hyperparameters(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in HYPER_KEYS}

    def _require_concrete(self):
        if self.is_grid:
            raise ValueError("config still holds grid axes; pick one point with grid()")


# -- config text format -------------------------------------------------------

_BOOL_KEYS = {"basepoint", "use_multiplier", "fit_intercept", "use_prev_value", "standardize",
              "reduce_dim", "recursive"}
_INT_KEYS = {"max_length", "level", "t_level", "k"}
_FLOAT_KEYS = {"alpha", "l1_ratio", "target_lag", "training_proportion"}
_TIME_KEYS = {"validation_start", "test_start", "test_end"}
_NULLABLE = {"max_length", "t_level", "training_proportion", "validation_start", "test_start",
             "test_end", "columns", "window_type", "keep_sigs", "regularize"}
_CHOICES = {
    "window_type": WINDOW_TYPES,
    "fill_method": FILL_METHODS,
    "keep_sigs": KEEP_MODES,
    "regularize": REGULARIZERS,
}
_NONE_MEANS = {"window_type": "expanding", "keep_sigs": "all", "regularize": "none"}
_FIELD_NAMES = [f.name for f in fields(NowcastConfig)]
_REQUIRED_HINT = "target, and test_start or training_proportion"


def _coerce(key: str, value):
    """Type-check one scalar value for ``key``."""
    if value is None:
        if key in _NONE_MEANS:
            return _NONE_MEANS[key]
        if key in _NULLABLE:
            return None
        raise ConfigError(key, "may not be none")
    if key in _BOOL_KEYS:
        if not isinstance(value, (bool, np.bool_)):
            raise ConfigError(key, f"expected true/false, got {value!r}")
        return bool(value)
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            else:
                raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(value)
    if key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if key in _CHOICES:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected one of {_CHOICES[key]}, got {value!r}")
        v = value
        if key == "regularize" and v == "elasticnet":
            v = "elastic_net"
        if key in _NONE_MEANS and v in ("None", "none"):
            v = _NONE_MEANS[key]
        if v not in _CHOICES[key]:
            raise ConfigError(key, f"expected one of {_CHOICES[key]}, got {value!r}")
        return v
    if key in _TIME_KEYS:
        if isinstance(value, bool):
            raise ConfigError(key, f"expected a date or number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        try:
            pd.Timestamp(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"not a date: {value!r}") from exc
        return str(value)
    if key == "target":
        if not isinstance(value, str) or not value:
            raise ConfigError(key, f"expected a column name, got {value!r}")
        return value
    if key == "columns":
        vals = value if isinstance(value, (list, tuple)) else [value]
        return tuple(str(v) for v in vals)
    raise ConfigError(key, "unknown config key")


def validate_config(cfg: NowcastConfig) -> None:
    """Normalize values in place and check cross-key consistency."""
    for name in _FIELD_NAMES:
        value = getattr(cfg, name)
        if name == "factors":
            norm = tuple((str(g), c if isinstance(c, str) else tuple(str(x) for x in c))
                         for g, c in value)
        elif name == "columns" and value is not None:
            norm = _coerce(name, value)
        elif isinstance(value, (list, tuple)):
            if name not in HYPER_KEYS:
                raise ConfigError(name, "does not accept a list of values")
            if len(value) == 0:
                raise ConfigError(name, "grid axis is empty")
            norm = tuple(_coerce(name, v) for v in value)
            if len(norm) == 1:
                norm = norm[0]
        else:
            norm = _coerce(name, value)
        object.__setattr__(cfg, name, norm)

    def axis(key):
        v = getattr(cfg, key)
        return v if isinstance(v, tuple) else (v,)

    for name in ("alpha",):
        if any(a < 0 for a in axis(name)):
            raise ConfigError(name, "must be >= 0")
    if any(not 0.0 <= v <= 1.0 for v in axis("l1_ratio")):
        raise ConfigError("l1_ratio", "must lie in [0, 1]")
    if any(v < 1 for v in axis("level")):
        raise ConfigError("level", "must be >= 1")
    if any(v < 1 for v in axis("k")):
        raise ConfigError("k", "must be >= 1")
    if cfg.target_lag < 0:
        raise ConfigError("target_lag", "must be >= 0")
    if cfg.training_proportion is not None and not 0.0 < cfg.training_proportion < 1.0:
        raise ConfigError("training_proportion", "must lie strictly between 0 and 1")
    for level, t_level in product(axis("level"), axis("t_level")):
        if t_level is not None and (t_level < 0 or t_level > level):
            raise ConfigError("t_level", f"t_level={t_level} must lie in [0, level={level}]")
    for wt, ml in product(axis("window_type"), axis("max_length")):
        if wt != "expanding" and (ml is None or ml < 1):
            raise ConfigError("max_length", f"window_type={wt!r} needs max_length >= 1")
    if cfg.test_start is None and cfg.training_proportion is None:
        raise ConfigError("test_start", "give test_start or training_proportion")
    times = [(k, getattr(cfg, k)) for k in ("validation_start", "test_start", "test_end")]
    times = [(k, v) for k, v in times if v is not None]
    if len({type(v) for _, v in times}) > 1:
        raise ConfigError(times[-1][0], "mixes dates and plain numbers")
    for (k1, v1), (k2, v2) in zip(times, times[1:]):
        # test_end is inclusive, so a one-day test period is allowed
        if _order_key(v1) > _order_key(v2) or (k2 != "test_end" and v1 == v2):
            raise ConfigError(k2, f"must come after {k1}")


def _order_key(v):
    return pd.Timestamp(v) if isinstance(v, str) else v


def _split_outside_quotes(text: str, sep: str) -> int:
    quoted = False
    for i, ch in enumerate(text):
        if ch == '"':
            quoted = not quoted
        elif ch == sep and not quoted:
            return i
    return -1


_INT_RE = re.compile(r"^[+-]?\d+$")


def _parse_scalar(token: str):
    token = token.strip()
    if len(token) >= 2 and token[0] == token[-1] == '"':
        return token[1:-1]
    low = token.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    if low in ("none", "null"):
        return None
    if _INT_RE.match(token):
        return int(token)
    try:
        return float(token)
    except ValueError:
        return token


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        if not inner:
            return []
        items = next(csv.reader(io.StringIO(inner), skipinitialspace=True))
        # csv strips the quotes; keep quoted items as strings
        quoted = next(csv.reader(io.StringIO(inner), skipinitialspace=True, quoting=csv.QUOTE_NONE))
        return [it if q.strip().startswith('"') else _parse_scalar(it)
                for it, q in zip(items, quoted)]
    return _parse_scalar(raw)


def parse_config(text: str) -> NowcastConfig:
    """Parse a flat ``key = value`` document.

    ``#`` starts a comment, ``[a, b]`` is a list (a grid axis for
    hyperparameters), strings may be double quoted, ``none`` is a null and
    ``factor.<group> = [col, ...]`` declares a factor group (``all`` for
    every column).
    """
    values: dict[str, Any] = {}
    factors: list[tuple[str, Any]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        cut = _split_outside_quotes(line, "#")
        if cut >= 0:
            line = line[:cut]
        line = line.strip()
        if not line:
            continue
        eq = _split_outside_quotes(line, "=")
        if eq < 0:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key = line[:eq].strip()
        value = _parse_value(line[eq + 1:])
        if key.startswith("factor."):
            group = key[len("factor."):]
            if not group:
                raise ConfigError(key, "factor group needs a name")
            if isinstance(value, list):
                value = tuple(str(v) for v in value)
            elif value != "all":
                value = (str(value),)
            factors.append((group, value))
            continue
        if key not in _FIELD_NAMES or key == "factors":
            raise ConfigError(key, "unknown config key")
        if key in values:
            raise ConfigError(key, "given more than once")
        if isinstance(value, list) and key != "columns":
            value = tuple(value)
        values[key] = value
    if "target" not in values:
        if not values and not factors:
            raise ConfigError("config", f"empty document; required keys: {_REQUIRED_HINT}")
        raise ConfigError("target", f"missing required key; required keys: {_REQUIRED_HINT}")
    if values.get("test_start") is None and values.get("training_proportion") is None:
        raise ConfigError("test_start",
                          f"missing required key; required keys: {_REQUIRED_HINT}")
    return NowcastConfig(factors=tuple(factors), **values)


def _format_scalar(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    s = str(v)
    plain = re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.:\-/]*|\d{4}-\d{2}-\d{2}[0-9:T ]*", s)
    if plain and not isinstance(_parse_scalar(s), (bool, int, float, type(None))):
        return s
    return '"' + s.replace('"', "") + '"'


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return "[" + ", ".join(_format_scalar(x) for x in v) + "]"
    return _format_scalar(v)


def format_config(cfg: NowcastConfig) -> str:
    """Inverse of :func:`parse_config` (every field written explicitly)."""
    lines = []
    for name in _FIELD_NAMES:
        if name == "factors":
            continue
        lines.append(f"{name} = {_format_value(getattr(cfg, name))}")
    for group, cols in cfg.factors:
        lines.append(f"factor.{group} = {_format_value(cols)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> NowcastConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# -- release calendar ---------------------------------------------------------

def _to_time(value, frame: TimeSeriesFrame):
    if value is None:
        return None
    return pd.Timestamp(value) if frame.is_datetime else float(value)


@dataclass
class _Releases:
    refs: pd.Index
    values: np.ndarray
    release: list
    lag: float

    @classmethod
    def from_frame(cls, frame: TimeSeriesFrame) -> "_Releases":
        y = frame.target_series()
        return cls(y.index, y.to_numpy(float), [frame.release_time(r) for r in y.index],
                   frame.target_lag)

    def count_published(self, now) -> int:
        """Number of targets published at or before ``now``."""
        if len(self.refs) == 0:
            return 0
        return int(self.refs.searchsorted(shift_time(now, -self.lag), side="right"))


# -- fitting and prediction ---------------------------------------------------

class _Context:
    """Per (frame, concrete config) state: filled data and caches."""

    def __init__(self, frame: TimeSeriesFrame, config: NowcastConfig):
        config._require_concrete()
        self.frame = frame
        self.config = config
        self.spec = config.window_spec()
        self.recipe = config.recipe()
        cols = list(config.columns) if config.columns else frame.feature_columns
        missing = [c for c in cols if c not in frame.data.columns]
        if missing:
            raise ConfigError("columns", f"unknown column(s) {', '.join(missing)}")
        if frame.target in cols:
            raise ConfigError("columns", "the target column cannot be a path channel")
        self.columns = cols
        raw = frame.data[cols]
        # forward filling only looks backwards in time, so it can be done once
        self.features = raw.ffill() if config.fill_method != "bfill" else raw
        self.index = frame.index
        self.releases = _Releases.from_frame(frame)
        self.sig_cache: dict = {}
        self.model_cache: dict = {}
        self.names = ["t"] + (self._factor_names() if config.reduce_dim else cols)
        self.retained = retained_words(len(self.names), config.level, config.keep_sigs, 0,
                                       config.t_level)

    def _factor_names(self) -> list[str]:
        structure = self.config.factor_structure()
        if structure:
            return list(structure)
        return [f"pc{i + 1}" for i in range(self.config.k)]

    # window helpers
    def last_index_before(self, t, strict: bool):
        pos = self.index.searchsorted(t, side="left" if strict else "right") - 1
        return None if pos < 0 else self.index[pos]

    def window_available(self, end) -> bool:
        spec = self.spec
        if spec.window_type == "days":
            return time_delta(self.index[0], end) >= spec.max_length - 1
        if spec.window_type == "ind":
            return int(self.index.searchsorted(end, side="right")) >= spec.max_length
        return True

    def latest_published(self, now) -> tuple[Any, float] | None:
        n = self.releases.count_published(now)
        if n == 0:
            return None
        return self.releases.refs[n - 1], float(self.releases.values[n - 1])

    def covers_last_release(self, end) -> bool:
        """Does the window ending at ``end`` contain the reference time of the
        last target published by ``end``?"""
        last = self.latest_published(end)
        if last is None:
            return False
        ref = last[0]
        spec = self.spec
        if spec.window_type == "days":
            return time_delta(ref, end) < spec.max_length
        if spec.window_type == "ind":
            pos = int(self.index.searchsorted(end, side="right"))
            start = self.index[max(pos - spec.max_length, 0)]
            return ref >= start
        return True

    def terms(self, end, pca: GroupPCA | None = None) -> np.ndarray:
        if pca is None and end in self.sig_cache:
            return self.sig_cache[end]
        cfg = self.config
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ShortWindowWarning)
            window = window_slice(self.features, self.spec, end)
        if pca is not None:
            window = pca.transform(fill_missing(window, "ffill"))
        origin, unit = window_time_scale(window, self.spec, end)
        path = build_path(window, cfg.fill_method, time_augment=True, basepoint=cfg.basepoint,
                          time_origin=origin, time_unit=unit)
        psi, retained = filter_terms(signature(path, cfg.level), cfg.keep_sigs, 0, cfg.t_level)
        if retained != self.retained:
            raise ValueError(f"window at {end} has {path.dim} channels, expected {len(self.names)}")
        if pca is None:
            self.sig_cache[end] = psi
        return psi

    def fit_pca(self, now) -> GroupPCA:
        visible = fill_missing(self.features[self.index <= now], "ffill")
        return GroupPCA(self.config.factor_structure() or None, self.config.k).fit(visible)

    def training_set(self, now, pca=None):
        rows, ys, refs = [], [], []
        n_pub = self.releases.count_published(now)
        for i in range(n_pub):
            end = self.last_index_before(self.releases.release[i], strict=True)
            if end is None or not self.window_available(end) or not self.covers_last_release(end):
                continue
            prev = self.latest_published(end)[1]
            psi = self.terms(end, pca)
            rows.append(design_from_terms(psi, self.retained, prev, self.recipe))
            ys.append(self.releases.values[i])
            refs.append(self.releases.refs[i])
        return rows, np.array(ys), refs

    def fit(self, now) -> tuple[SigRegressionModel, GroupPCA | None]:
        cfg = self.config
        key = now if cfg.reduce_dim else self.releases.count_published(now)
        if key in self.model_cache:
            return self.model_cache[key]
        pca = self.fit_pca(now) if cfg.reduce_dim else None
        rows, y, _ = self.training_set(now, pca)
        if len(rows) < 2:
            raise ValueError(f"fewer than 2 training rows available at {now}")
        labels = self.recipe.column_labels(self.retained, lambda w: word_label(w, self.names))
        model = fit_sig_model(rows, y, self.recipe, self.retained, penalty=cfg.penalty(),
                              standardize=cfg.standardize, column_names=labels)
        self.model_cache[key] = (model, pca)
        return model, pca

    def predict(self, t, model: SigRegressionModel, pca=None) -> float:
        end = self.last_index_before(t, strict=False)
        if end is None or not self.covers_last_release(end):
            return float("nan")
        last = self.latest_published(end)
        psi = self.terms(end, pca)
        return model.predict_row(design_from_terms(psi, self.retained, last[1], self.recipe))


def fit_model(frame: TimeSeriesFrame, config: NowcastConfig, now) -> SigRegressionModel:
    """Fit the signature regression with the information available at ``now``."""
    now = _to_time(now, frame) if isinstance(now, str) else now
    return _Context(frame, config).fit(now)[0]


# -- runs ---------------------------------------------------------------------

RUN_COLUMNS = ["time", "target_ref", "prediction", "realized", "days_since_release",
               "n_releases", "params_hash"]


@dataclass
class NowcastRun:
    """Per-time predictions with the config that produced them."""

    table: pd.DataFrame
    config: NowcastConfig
    grid_table: pd.DataFrame | None = None
    coefficients: pd.DataFrame | None = None
    meta: dict = field(default_factory=dict)


def _row_meta(ctx_releases: _Releases, t):
    n = ctx_releases.count_published(t)
    nxt = n if n < len(ctx_releases.refs) else None
    ref = ctx_releases.refs[nxt] if nxt is not None else None
    realized = float(ctx_releases.values[nxt]) if nxt is not None else float("nan")
    since = time_delta(ctx_releases.release[n - 1], t) if n > 0 else float("nan")
    return ref, realized, since, n


def _predict_times(ctx: _Context, times, recursive: bool) -> pd.DataFrame:
    out = []
    batch_model = None
    if not recursive and len(times):
        batch_model = ctx.fit(times[0])
    h = ctx.config.params_hash()
    for t in times:
        model, pca = batch_model if batch_model is not None else ctx.fit(t)
        pred = ctx.predict(t, model, pca)
        ref, realized, since, n = _row_meta(ctx.releases, t)
        out.append((t, ref, pred, realized, since, n, h))
    return pd.DataFrame(out, columns=RUN_COLUMNS)


def split_periods(frame: TimeSeriesFrame, config: NowcastConfig) -> tuple[pd.Index, pd.Index]:
    """(validation times, test times) as frame timestamps.

    With ``training_proportion`` p and no explicit dates, the test period is
    the last 1-p of the timestamps and validation the last 1-p of the rest
    (so p = 0.8 gives a 0.64/0.16/0.20 split).
    """
    idx = frame.index
    test_start = _to_time(config.test_start, frame)
    test_end = _to_time(config.test_end, frame)
    val_start = _to_time(config.validation_start, frame)
    p = config.training_proportion
    if test_start is not None:
        test = idx[idx >= test_start]
        if test_end is not None:
            test = test[test <= test_end]
        before = idx[idx < test_start]
    else:
        n_tv = int(round(p * len(idx)))
        test, before = idx[n_tv:], idx[:n_tv]
        if test_end is not None:
            test = test[test <= test_end]
    if val_start is not None:
        val = before[before >= val_start]
    elif p is not None:
        val = before[int(round(p * len(before))):]
    else:
        val = before[:0]
    if len(test) == 0:
        raise ValueError("test period is empty")
    return val, test


def rmse(errors) -> float:
    e = np.asarray(errors, dtype=float)
    return float(np.sqrt(np.mean(e**2)))


def _release_of(frame: TimeSeriesFrame, ref):
    return frame.release_time(ref)


def _score_grid_point(frame, cfg, val_times, cutoff):
    try:
        ctx = _Context(frame, cfg)
        table = _predict_times(ctx, val_times, cfg.recursive)
        ok = table["prediction"].notna() & table["realized"].notna()
        if cutoff is not None:
            # only targets published before the test period may inform the choice
            ok &= table["target_ref"].map(
                lambda r: r is not None and _release_of(frame, r) < cutoff).astype(bool)
        scored = table[ok]
        if len(scored) == 0:
            return float("nan"), 0, "no scorable validation nowcasts"
        return rmse(scored["prediction"] - scored["realized"]), len(scored), ""
    except (ValueError, np.linalg.LinAlgError) as exc:
        return float("nan"), 0, str(exc)


def _n_jobs(n_jobs):
    if n_jobs is not None:
        return int(n_jobs)
    return int(os.environ.get(THREADS_ENV, "1") or 1)


def grid_search(frame: TimeSeriesFrame, config: NowcastConfig, n_jobs=None
                ) -> tuple[NowcastConfig, pd.DataFrame]:
    """Score every grid point by validation RMSE; ties go to the earliest point."""
    combos = config.grid()
    val_times, test_times = split_periods(frame, config)
    if len(combos) == 1:
        table = pd.DataFrame([{"grid_index": 0, **_axis_values(config, combos[0]),
                               "rmse": float("nan"), "n": 0, "error": ""}])
        return combos[0], table
    if len(val_times) == 0:
        raise ValueError("validation period is empty; set validation_start or training_proportion")
    cutoff = test_times[0]
    results = Parallel(n_jobs=_n_jobs(n_jobs))(
        delayed(_score_grid_point)(frame, c, val_times, cutoff) for c in combos)
    records = []
    for i, (c, (score, n, err)) in enumerate(zip(combos, results)):
        records.append({"grid_index": i, **_axis_values(config, c), "rmse": score, "n": n,
                        "error": err})
    table = pd.DataFrame(records)
    scores = table["rmse"].to_numpy(float)
    if np.all(np.isnan(scores)):
        causes = "; ".join(sorted(set(table["error"])))
        raise ValueError(f"every grid point failed: {causes}")
    best = int(np.argmin(np.where(np.isnan(scores), np.inf, scores)))
    return combos[best], table


def _axis_values(grid_cfg: NowcastConfig, cfg: NowcastConfig) -> dict:
    return {k: getattr(cfg, k) for k in grid_cfg.grid_axes}


def coefficient_table(model: SigRegressionModel) -> pd.DataFrame:
    """Coefficients on the raw (unstandardized) design columns."""
    coef, intercept = model.raw_coefficients()
    names = model.column_names or [str(i) for i in range(len(coef))]
    rows = [("(intercept)", intercept)] + list(zip(names, coef))
    return pd.DataFrame(rows, columns=["term", "coefficient"])


def run_nowcast(frame: TimeSeriesFrame, config: NowcastConfig, n_jobs=None) -> NowcastRun:
    """Pick hyperparameters on the validation period, then nowcast the test
    period (refitting at every time when ``recursive``, else fitting once at
    the start of the test period)."""
    best, grid_table = grid_search(frame, config, n_jobs)
    _, test_times = split_periods(frame, config)
    ctx = _Context(frame, best)
    table = _predict_times(ctx, test_times, best.recursive)
    model, _ = ctx.fit(test_times[-1]) if best.recursive else ctx.fit(test_times[0])
    return NowcastRun(table, best, grid_table if config.is_grid else None,
                      coefficient_table(model),
                      meta={"n_grid_points": len(config.grid())})


def run_ar1_baseline(frame: TimeSeriesFrame, times) -> pd.DataFrame:
    """AR(1) on the published target series, iterated to the target being
    nowcast. Forecasts change only when a new target is published, so a
    weekly forecast is held through the week and scored at every time."""
    rel = _Releases.from_frame(frame)
    out = []
    cache: dict[int, tuple[float, float]] = {}
    for t in times:
        ref, realized, since, n = _row_meta(rel, t)
        pred = float("nan")
        if n >= 3:
            if n not in cache:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    cache[n] = fit_ar1(rel.values[:n])
            d0, d1 = cache[n]
            steps = 1 if ref is None else int(rel.refs.get_loc(ref)) - (n - 1)
            pred = ar1_forecast(d0, d1, float(rel.values[n - 1]), steps)
        out.append((t, ref, pred, realized, since, n, "ar1"))
    return pd.DataFrame(out, columns=RUN_COLUMNS)


def evaluate(run) -> dict:
    """RMSE, MAE and the MAE by days since the last target release."""
    table = run.table if isinstance(run, NowcastRun) else run
    ok = table["prediction"].notna() & table["realized"].notna()
    scored = table[ok]
    if len(scored) == 0:
        raise ValueError("no nowcasts have a realized target to score against")
    err = (scored["prediction"] - scored["realized"]).to_numpy(float)
    since = scored["days_since_release"].to_numpy(float)
    key = np.round(since, 6)
    prof = (pd.DataFrame({"days_since_release": key, "abs_error": np.abs(err)})
            .groupby("days_since_release", sort=True)["abs_error"]
            .agg(["mean", "count"]).rename(columns={"mean": "mae", "count": "n"}).reset_index())
    return {
        "rmse": rmse(err),
        "mae": float(np.mean(np.abs(err))),
        "n": int(len(err)),
        "n_skipped": int((~ok).sum()),
        "profile": prof,
    }


def write_run(run: NowcastRun, out_dir, baseline: pd.DataFrame | None = None) -> dict:
    """Write nowcasts.csv, evaluation.json, error_by_days.csv,
    coefficients.csv and (for grids) grid.csv. Returns the report dict."""
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_table(run.table, out / "nowcasts.csv")
    ev = evaluate(run)
    ev["profile"].to_csv(out / "error_by_days.csv", index=False, float_format="%.10g")
    report = {k: v for k, v in ev.items() if k != "profile"}
    report["params_hash"] = run.config.params_hash()
    report["hyperparameters"] = run.config.hyperparameters()
    if baseline is not None:
        bev = evaluate(baseline)
        report["baseline_ar1"] = {k: v for k, v in bev.items() if k != "profile"}
    if run.coefficients is not None:
        run.coefficients.to_csv(out / "coefficients.csv", index=False, float_format="%.12g")
    if run.grid_table is not None:
        run.grid_table.to_csv(out / "grid.csv", index=False, float_format="%.12g")
    with open(out / "evaluation.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return report


def write_table(table: pd.DataFrame, path) -> None:
    out = table.copy()
    for col in ("time", "target_ref"):
        if pd.api.types.is_datetime64_any_dtype(out[col]):
            out[col] = out[col].dt.strftime("%Y-%m-%d")
        else:
            out[col] = out[col].map(
                lambda v: "" if v is None or (isinstance(v, float) and np.isnan(v))
                else (v.strftime("%Y-%m-%d") if isinstance(v, pd.Timestamp) else v))
    out.to_csv(path, index=False, float_format="%.12g")
