"""Monte-Carlo study of signature regression against the optimal filter.

A scalar Ornstein-Uhlenbeck state is observed through a noisy integrated
channel. Per path the optimal (steady-state Kalman-Bucy) filter is run with
known parameters, while the signature model learns everything from the
training paths. Four regimes: regular grid, random subsampling, sigmoid
observations, and both.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path as FsPath

import numpy as np
import pandas as pd

from .filters import KalmanBucyParams, steady_state_rates
from .regress import fit_sig_model, DesignRecipe
from .sigcore import batch_signature, keep_mask, retained_words, word_label

logger = logging.getLogger(__name__)

REGIMES = ("regular", "subsampled", "sigmoid", "sigmoid-subsampled")


@dataclass(frozen=True)
class SimConfig:
    F: float = -1.0
    H: float = 10.0
    sigma2: float = 2.0
    f: float = 0.0
    h: float = 0.0
    obs_noise: float = 1.0
    Y0: float = 0.1
    dt: float = 0.005
    T_min: float = 0.1
    T_max: float = 1.0
    n_paths: int = 1000
    n_train: int = 800
    keep_fraction: float = 1.0
    transform: str = "none"
    level: int = 6
    keep_sigs: str = "innermost"
    t_level: int | None = None
    regularize: str = "none"
    alpha: float = 0.0
    l1_ratio: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.sigma2 < 0 or self.obs_noise < 0:
            raise ValueError("noise scales must be >= 0")
        if not 0 < self.keep_fraction <= 1:
            raise ValueError("keep_fraction must be in (0, 1]")
        if not 0 < self.n_train < self.n_paths:
            raise ValueError("need 0 < n_train < n_paths")
        if self.transform not in ("none", "sigmoid"):
            raise ValueError(f"transform={self.transform!r} not in ('none', 'sigmoid')")
        if not 0 < self.T_min <= self.T_max:
            raise ValueError("need 0 < T_min <= T_max")

    @property
    def n_test(self) -> int:
        return self.n_paths - self.n_train

    def kb_params(self) -> KalmanBucyParams:
        """Filter parameters for the observation rescaled to unit noise."""
        if self.obs_noise <= 0:
            raise ValueError("the filter needs obs_noise > 0")
        s = self.obs_noise
        return KalmanBucyParams.scalar(self.F, self.H / s, self.sigma2, f=self.f, h=self.h / s,
                                       y0=self.Y0)

    @classmethod
    def for_regime(cls, regime: str, **overrides) -> "SimConfig":
        if regime not in REGIMES:
            raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")
        base = {}
        if "subsampled" in regime:
            base["keep_fraction"] = 0.2
        if regime.startswith("sigmoid"):
            base.update(transform="sigmoid", level=3, keep_sigs="all")
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class SimPath:
    times: np.ndarray
    Y: np.ndarray
    X: np.ndarray

    @property
    def T(self) -> float:
        return float(self.times[-1])


def path_rng(seed: int, path_id: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, path_id, stream])


def simulate_pair(config: SimConfig, path_id: int) -> SimPath:
    """Euler-Maruyama on the fixed grid, terminal time rounded down to it."""
    rng = path_rng(config.seed, path_id)
    T = rng.uniform(config.T_min, config.T_max)
    n = max(int(np.floor(T / config.dt + 1e-9)), 1)
    zeta = rng.standard_normal(n)
    xi = rng.standard_normal(n)
    dt = config.dt
    sq = np.sqrt(dt)
    sigma = np.sqrt(config.sigma2)
    Y = np.empty(n + 1)
    X = np.empty(n + 1)
    Y[0], X[0] = config.Y0, 0.0
    for k in range(n):
        Y[k + 1] = Y[k] + (config.F * Y[k] + config.f) * dt + sigma * sq * zeta[k]
        X[k + 1] = X[k] + (config.H * Y[k] + config.h) * dt + config.obs_noise * sq * xi[k]
    return SimPath(np.arange(n + 1) * dt, Y, X)


def subsample(n_points: int, keep_fraction: float, rng: np.random.Generator,
              keep_last: bool = True) -> np.ndarray:
    """Indices of retained grid points.

    Each interior point survives independently with probability
    ``keep_fraction``; the first point is always kept, and so is the last
    unless ``keep_last`` is False (then it is treated like an interior point).
    """
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must be in (0, 1]")
    if keep_fraction == 1.0:
        return np.arange(n_points)
    n_candidates = n_points - 2 if keep_last else n_points - 1
    keep = rng.random(max(n_candidates, 0)) < keep_fraction
    idx = np.concatenate([[0], 1 + np.flatnonzero(keep)])
    if keep_last and n_points > 1:
        idx = np.append(idx, n_points - 1)
    if idx.size < 2:
        raise ValueError("fewer than 2 points survive subsampling")
    return idx


def sigmoid_transform(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def inverse_derivative(xbar):
    """Derivative of the inverse sigmoid, ``1 / (xbar (1 - xbar))``."""
    xbar = np.asarray(xbar, dtype=float)
    if np.any(xbar <= 0.0) or np.any(xbar >= 1.0):
        raise ValueError("sigmoid observations must lie strictly inside (0, 1)")
    return 1.0 / (xbar * (1.0 - xbar))


def observation_increments(obs, mode: str = "raw") -> np.ndarray:
    """Increments fed to the filter: plain differences, or for sigmoid
    observations the inverse-derivative weighted differences."""
    obs = np.asarray(obs, dtype=float)
    d = np.diff(obs)
    if mode == "raw":
        return d
    if mode == "sigmoid":
        return inverse_derivative(obs[:-1]) * d
    raise ValueError(f"unknown increment mode {mode!r}")


@dataclass
class PathBatch:
    """Observed data for a run, padded to a common step count."""

    path_ids: np.ndarray
    targets: np.ndarray
    sig_increments: np.ndarray  # (paths, steps, 2): time and observation
    filter_dt: np.ndarray  # (paths, steps)
    filter_dx: np.ndarray  # (paths, steps)
    filter_obs: np.ndarray  # (paths, steps) bool
    n_observed: np.ndarray


def observe(config: SimConfig, path: SimPath, path_id: int):
    """Observation times, values and filter inputs for one simulated path.

    Unobserved stretches at the end are forward filled up to the terminal
    time for the signature and handled as prediction-only by the filter.
    """
    n_points = len(path.times)
    idx = subsample(n_points, config.keep_fraction, path_rng(config.seed, path_id, 1))
    obs = path.X if config.transform == "none" else sigmoid_transform(path.X)
    t_obs = path.times[idx]
    v_obs = obs[idx]
    mode = "raw" if config.transform == "none" else "sigmoid"
    dx = observation_increments(v_obs, mode)
    dt = np.diff(t_obs)
    flags = np.ones(len(dt), dtype=bool)
    if idx[-1] != n_points - 1:
        tail = path.T - t_obs[-1]
        t_sig = np.append(t_obs, path.T)
        v_sig = np.append(v_obs, v_obs[-1])
        dt = np.append(dt, tail)
        dx = np.append(dx, 0.0)
        flags = np.append(flags, False)
    else:
        t_sig, v_sig = t_obs, v_obs
    inc = np.column_stack([np.diff(t_sig), np.diff(v_sig)])
    return inc, dt, dx, flags, len(idx)


def simulate_batch(config: SimConfig, path_ids=None) -> PathBatch:
    path_ids = np.arange(config.n_paths) if path_ids is None else np.asarray(path_ids)
    incs, dts, dxs, flags, targets, counts = [], [], [], [], [], []
    for pid in path_ids:
        p = simulate_pair(config, int(pid))
        inc, dt, dx, fl, n_obs = observe(config, p, int(pid))
        incs.append(inc)
        dts.append(dt)
        dxs.append(dx)
        flags.append(fl)
        targets.append(p.Y[-1])
        counts.append(n_obs)
    steps = max(len(i) for i in incs)
    n = len(path_ids)
    inc_arr = np.zeros((n, steps, 2))
    dt_arr = np.zeros((n, steps))
    dx_arr = np.zeros((n, steps))
    fl_arr = np.zeros((n, steps), dtype=bool)
    for i in range(n):
        m = len(incs[i])
        inc_arr[i, :m] = incs[i]
        dt_arr[i, :m] = dts[i]
        dx_arr[i, :m] = dxs[i]
        fl_arr[i, :m] = flags[i]
    return PathBatch(path_ids, np.array(targets), inc_arr, dt_arr, dx_arr, fl_arr,
                     np.array(counts))


def kalman_bucy_batch(config: SimConfig, batch: PathBatch) -> np.ndarray:
    """Vectorized steady-state Euler filter; padded steps have dt = dx = 0."""
    params = config.kb_params()
    _, gain = steady_state_rates(params)
    H, h = params.H[0, 0], params.h[0]
    y = np.full(len(batch.targets), config.Y0, dtype=float)
    for s in range(batch.filter_dt.shape[1]):
        dt = batch.filter_dt[:, s]
        obs = batch.filter_obs[:, s]
        dx = batch.filter_dx[:, s] / config.obs_noise
        with_obs = y + (config.F * y + config.f) * dt + gain * (dx - (H * y + h) * dt)
        without = y + (config.F * y + config.f) * dt
        y = np.where(obs, with_obs, without)
    return y


def residual_regression(res_a, res_b) -> tuple[float, float, float]:
    """Least-squares line of ``res_b`` on ``res_a``: (slope, intercept, R^2)."""
    a = np.asarray(res_a, dtype=float)
    b = np.asarray(res_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 3:
        raise ValueError("need two residual vectors of equal length >= 3")
    am, bm = a.mean(), b.mean()
    sxx = ((a - am) ** 2).sum()
    if sxx == 0.0:
        raise ValueError("first residual vector has zero variance")
    slope = ((a - am) * (b - bm)).sum() / sxx
    intercept = bm - slope * am
    fitted = intercept + slope * a
    sst = ((b - bm) ** 2).sum()
    r2 = 1.0 - ((b - fitted) ** 2).sum() / sst if sst > 0 else 1.0
    return float(slope), float(intercept), float(r2)


@dataclass
class ResidualReport:
    regime: str
    n_train: int
    n_test: int
    kf_mean: float
    kf_var: float
    sig_mean: float
    sig_var: float
    slope: float
    intercept: float
    r2: float
    n_features: int
    low_sample: bool
    config: dict = field(default_factory=dict)
    coefficients: dict = field(default_factory=dict)
    residuals: pd.DataFrame | None = field(default=None, repr=False)

    def summary(self) -> dict:
        out = asdict(self)
        out.pop("residuals")
        return out

    def headline(self) -> str:
        return (f"{self.regime}: slope={self.slope:.3f} intercept={self.intercept:.3f} "
                f"R2={self.r2:.3f} kf(mean={self.kf_mean:.3f}, var={self.kf_var:.3f}) "
                f"sig(mean={self.sig_mean:.3f}, var={self.sig_var:.3f})")

    def write(self, out_dir) -> None:
        out_dir = FsPath(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        if self.residuals is not None:
            self.residuals.to_csv(out_dir / "residuals.csv", index=False, float_format="%.12g")


def run_regime(config: SimConfig, regime: str = "custom") -> ResidualReport:
    """Simulate, fit the signature regression on training paths, and compare
    its test residuals with the optimal filter's."""
    batch = simulate_batch(config)
    level = config.level
    retained = retained_words(2, level, config.keep_sigs, 0, config.t_level)
    mask = keep_mask(2, level, config.keep_sigs, 0, config.t_level)
    feats = batch_signature(batch.sig_increments, level)[:, mask]
    kf = kalman_bucy_batch(config, batch)

    tr = slice(0, config.n_train)
    te = slice(config.n_train, config.n_paths)
    recipe = DesignRecipe(keep_sigs=config.keep_sigs, level=level, t_level=config.t_level)
    names = ["t", "x"]
    model = fit_sig_model(feats[tr], batch.targets[tr], recipe, retained,
                          penalty=(config.regularize, config.alpha, config.l1_ratio),
                          column_names=[word_label(w, names) for w in retained])
    pred = np.array([model.predict_row(r) for r in feats[te]])
    y_te = batch.targets[te]
    res_kf = y_te - kf[te]
    res_sig = y_te - pred
    slope, intercept, r2 = residual_regression(res_kf, res_sig)
    raw, raw_b = model.raw_coefficients()
    coefs = {word_label(w, names): float(c) for w, c in zip(retained, raw)}
    coefs["(intercept)"] = raw_b
    residuals = pd.DataFrame({
        "path_id": batch.path_ids[te],
        "target": y_te,
        "kf_pred": kf[te],
        "sig_pred": pred,
        "kf_resid": res_kf,
        "sig_resid": res_sig,
        "n_observed": batch.n_observed[te],
    })
    return ResidualReport(
        regime=regime,
        n_train=config.n_train,
        n_test=config.n_test,
        kf_mean=float(res_kf.mean()),
        kf_var=float(res_kf.var(ddof=1)),
        sig_mean=float(res_sig.mean()),
        sig_var=float(res_sig.var(ddof=1)),
        slope=slope,
        intercept=intercept,
        r2=r2,
        n_features=len(retained),
        low_sample=config.n_test < 100,
        config=asdict(config),
        coefficients=coefs,
        residuals=residuals,
    )


def theoretical_coefficients(words_, a: float, y0: float, gain: float = 1.0,
                             time_channel: int = 0) -> np.ndarray:
    """Expansion coefficients of the steady-state filter on time-only words
    (``y0 a^n``) and data-innermost words (``gain a^(n-1)``)."""
    out = []
    for w in words_:
        n = len(w)
        if all(c == time_channel for c in w):
            out.append(y0 * a**n)
        elif w[0] != time_channel and all(c == time_channel for c in w[1:]):
            out.append(gain * a ** (n - 1))
        else:
            raise ValueError(f"word {w} is not time-only or data-innermost")
    return np.array(out)


def _parse_label(label: str) -> tuple[int, ...]:
    letters = label.split(",")
    return tuple(0 if c == "t" else 1 for c in letters)


def compare_coefficients(fitted: dict, a: float, N: int, y0: float = 1.0, gain: float = 1.0
                         ) -> dict:
    """Signed differences ``fitted - theoretical`` per word label.

    ``fitted`` maps labels like ``"x,t,t"`` (time letter ``t``) to raw-scale
    coefficients; the intercept entry, if present, is ignored.
    """
    out = {}
    for label, value in fitted.items():
        if label.startswith("("):
            continue
        w = _parse_label(label)
        if len(w) > N:
            raise ValueError(f"word {label!r} exceeds level {N}")
        out[label] = float(value - theoretical_coefficients([w], a, y0, gain)[0])
    return out


def make_nowcast_frame(n_days: int = 1100, seed: int = 7, start: str = "2015-01-05",
                       kappa: float = 0.15, vol: float = 1.0, H: float = 1.0,
                       obs_noise: float = 0.3, target_lag: int = 8) -> pd.DataFrame:
    """Daily indicator and weekly target from a linear-Gaussian system.

    A hidden OU state (daily units) drives an integrated indicator observed
    on weekdays only. The target, stamped on each Monday, is the mean of the
    hidden state over that week and is published ``target_lag`` days later.
    """
    rng = np.random.default_rng([seed, 0])
    dates = pd.date_range(start, periods=n_days, freq="D")
    Y = np.empty(n_days)
    X = np.empty(n_days)
    Y[0] = rng.standard_normal() * vol / np.sqrt(2 * kappa)
    X[0] = 0.0
    for k in range(1, n_days):
        Y[k] = Y[k - 1] - kappa * Y[k - 1] + vol * rng.standard_normal()
        X[k] = X[k - 1] + H * Y[k - 1] + obs_noise * rng.standard_normal()
    indicator = X.copy()
    indicator[dates.dayofweek >= 5] = np.nan
    target = np.full(n_days, np.nan)
    for i in np.flatnonzero(dates.dayofweek == 0):
        if i + 7 <= n_days:
            target[i] = Y[i:i + 7].mean()
    frame = pd.DataFrame({"indicator": indicator, "target": target}, index=dates)
    frame.index.name = "date"
    return frame


def replace_config(config: SimConfig, **kw) -> SimConfig:
    return replace(config, **kw)
