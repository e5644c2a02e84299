"""Penalized linear regression on signature features.

The objective minimized by :class:`ElasticNetCD` is::

    (1/n) ||y - X b - c||^2 + gamma * l1_ratio * ||b||_1
                             + gamma * (1 - l1_ratio) * ||b||_2^2

with the intercept ``c`` unpenalized. Note the factors differ from
scikit-learn's ``ElasticNet`` (no 1/2 on either term).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .pathbuild import Standardizer
from .sigcore import KEEP_MODES, TruncatedSignature, filter_terms

REGULARIZERS = ("elastic_net", "l1", "l2", "none")


class ConvergenceWarning(UserWarning):
    pass


class DegenerateSeriesWarning(UserWarning):
    pass


def soft_threshold(x: float, t: float) -> float:
    return np.sign(x) * max(abs(x) - t, 0.0)


def resolve_penalty(regularize: str | None, gamma: float, l1_ratio: float) -> tuple[float, float]:
    """Effective (gamma, l1_ratio) after applying the regularizer name."""
    if regularize in (None, "none", "None"):
        return 0.0, 0.0
    if regularize == "elasticnet":
        regularize = "elastic_net"
    if regularize not in REGULARIZERS:
        raise ValueError(f"regularize={regularize!r} not in {REGULARIZERS}")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if regularize == "l1":
        return float(gamma), 1.0
    if regularize == "l2":
        return float(gamma), 0.0
    if not 0.0 <= l1_ratio <= 1.0:
        raise ValueError(f"l1_ratio must be in [0, 1], got {l1_ratio}")
    return float(gamma), float(l1_ratio)


def elastic_net_objective(X, y, coef, intercept, gamma, l1_ratio) -> float:
    r = y - X @ coef - intercept
    return float(
        r @ r / len(y)
        + gamma * l1_ratio * np.abs(coef).sum()
        + gamma * (1.0 - l1_ratio) * coef @ coef
    )


class ElasticNetCD(RegressorMixin, BaseEstimator):
    """Elastic net by cyclic coordinate descent with soft-thresholding.

    Parameters
    ----------
    alpha : float
        Penalty strength (gamma).
    l1_ratio : float
        Share of the L1 term, in [0, 1].
    regularize : {"elastic_net", "l1", "l2", "none"}
        ``l1``/``l2`` pin ``l1_ratio`` to 1/0; ``none`` sets ``alpha`` to 0.
    solver : {"auto", "cd", "lstsq"}
        ``auto`` uses a least-squares solve when the penalty is zero (highly
        collinear signature blocks make coordinate descent crawl there) and
        coordinate descent otherwise.
    """

    def __init__(self, alpha=1.0, l1_ratio=0.5, regularize="elastic_net", fit_intercept=True,
                 tol=1e-8, max_sweeps=100_000, solver="auto", record_objective=False):
        self.alpha = alpha
        self.l1_ratio = l1_ratio
        self.regularize = regularize
        self.fit_intercept = fit_intercept
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.solver = solver
        self.record_objective = record_objective

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        gamma, l1 = resolve_penalty(self.regularize, self.alpha, self.l1_ratio)
        n, p = X.shape
        if self.fit_intercept:
            x_mean = X.mean(axis=0)
            y_mean = y.mean()
        else:
            x_mean = np.zeros(p)
            y_mean = 0.0
        Xc = X - x_mean
        yc = y - y_mean

        solver = self.solver
        if solver == "auto":
            solver = "lstsq" if gamma == 0.0 else "cd"
        self.objective_path_ = []
        if solver == "lstsq":
            if gamma > 0 and l1 > 0:
                raise ValueError("lstsq solver only handles l1-free penalties")
            if gamma > 0:
                A = Xc.T @ Xc + n * gamma * np.eye(p)
                coef = np.linalg.solve(A, Xc.T @ yc)
            else:
                coef = np.linalg.lstsq(Xc, yc, rcond=None)[0]
            self.n_iter_ = 0
        elif solver == "cd":
            coef = self._coordinate_descent(Xc, yc, gamma, l1)
        else:
            raise ValueError(f"unknown solver {self.solver!r}")

        self.coef_ = coef
        self.intercept_ = float(y_mean - x_mean @ coef) if self.fit_intercept else 0.0
        self.n_features_in_ = p
        return self

    def _coordinate_descent(self, X, y, gamma, l1):
        n, p = X.shape
        coef = np.zeros(p)
        resid = y.copy()
        col_sq = (X * X).sum(axis=0) * (2.0 / n)
        denom = col_sq + 2.0 * gamma * (1.0 - l1)
        thresh = gamma * l1
        record = self.record_objective
        if record:
            self.objective_path_.append(elastic_net_objective(X, y, coef, 0.0, gamma, l1))
        sweep = 0
        for sweep in range(1, int(self.max_sweeps) + 1):
            max_change = 0.0
            for j in range(p):
                if denom[j] == 0.0:
                    continue
                old = coef[j]
                xj = X[:, j]
                rho = (2.0 / n) * (xj @ resid) + col_sq[j] * old
                new = soft_threshold(rho, thresh) / denom[j]
                if new != old:
                    resid -= xj * (new - old)
                    coef[j] = new
                    max_change = max(max_change, abs(new - old))
            if record:
                self.objective_path_.append(elastic_net_objective(X, y, coef, 0.0, gamma, l1))
            if max_change < self.tol:
                break
        else:
            warnings.warn(
                f"coordinate descent did not converge in {self.max_sweeps} sweeps",
                ConvergenceWarning,
                stacklevel=3,
            )
        self.n_iter_ = sweep
        return coef

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        return X @ self.coef_ + self.intercept_


@dataclass(frozen=True)
class DesignRecipe:
    """How signature terms and the past target become one design row."""

    keep_sigs: str = "all"
    level: int = 2
    t_level: int | None = None
    use_prev_value: bool = False
    use_multiplier: bool = False
    fit_intercept: bool = True
    multiplier_all_terms: bool = False
    time_channel: int = 0

    def __post_init__(self):
        if self.keep_sigs not in KEEP_MODES:
            raise ValueError(f"keep_sigs={self.keep_sigs!r} not in {KEEP_MODES}")
        if self.t_level is not None and self.t_level > self.level:
            raise ValueError(f"t_level={self.t_level} exceeds level={self.level}")

    @property
    def needs_prev(self) -> bool:
        return self.use_prev_value or self.use_multiplier

    def multiplier_mask(self, retained: list[tuple[int, ...]]) -> np.ndarray:
        if self.multiplier_all_terms:
            return np.ones(len(retained), dtype=bool)
        return np.array([all(c == self.time_channel for c in w) for w in retained], dtype=bool)

    def column_labels(self, retained, label) -> list[str]:
        """Design column names given a ``label(word) -> str`` function."""
        cols = [label(w) for w in retained]
        if self.use_multiplier:
            mask = self.multiplier_mask(retained)
            cols += [f"prev*{label(w)}" for w, m in zip(retained, mask) if m]
        if self.use_prev_value:
            cols.append("prev")
        return cols


def design_from_terms(psi: np.ndarray, retained, prev_target, recipe: DesignRecipe) -> np.ndarray:
    parts = [np.asarray(psi, dtype=float)]
    if recipe.needs_prev:
        if prev_target is None or not np.isfinite(prev_target):
            raise ValueError("recipe needs the previous target value but none is available")
    if recipe.use_multiplier:
        parts.append(prev_target * parts[0][recipe.multiplier_mask(retained)])
    if recipe.use_prev_value:
        parts.append(np.array([prev_target], dtype=float))
    return np.concatenate(parts)


def build_design_row(sig: TruncatedSignature, prev_target, recipe: DesignRecipe):
    """Filtered terms, then the prev-scaled pure-time block, then prev itself.

    Returns (row, retained_words).
    """
    psi, retained = filter_terms(sig, recipe.keep_sigs, recipe.time_channel, recipe.t_level)
    return design_from_terms(psi, retained, prev_target, recipe), retained


@dataclass
class SigRegressionModel:
    """Fitted regression on a fixed design recipe."""

    coef: np.ndarray
    intercept: float
    standardizer: Standardizer | None
    recipe: DesignRecipe
    words: list[tuple[int, ...]]
    column_names: list[str] = field(default_factory=list)

    def predict_row(self, row) -> float:
        row = np.asarray(row, dtype=float)
        if row.shape != self.coef.shape:
            raise ValueError(f"design row has {row.size} entries, model expects {self.coef.size}")
        if self.standardizer is not None:
            row = self.standardizer.transform(row[None, :])[0]
        return float(self.intercept + row @ self.coef)

    def predict(self, sig: TruncatedSignature, prev_target=None) -> float:
        psi, retained = filter_terms(sig, self.recipe.keep_sigs, self.recipe.time_channel,
                                     self.recipe.t_level)
        if retained != self.words:
            raise ValueError("signature words do not match the fitted model")
        return self.predict_row(design_from_terms(psi, retained, prev_target, self.recipe))

    def raw_coefficients(self) -> tuple[np.ndarray, float]:
        """Coefficients and intercept on the unstandardized design columns."""
        if self.standardizer is None:
            return self.coef.copy(), self.intercept
        coef = self.coef / self.standardizer.scale_
        return coef, float(self.intercept - self.standardizer.mean_ @ coef)


def fit(X, y, penalty: tuple[str, float, float] = ("none", 0.0, 0.0), fit_intercept=True,
        **kwargs):
    """Functional wrapper: returns (coef, intercept)."""
    regularize, gamma, l1_ratio = penalty
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in regression inputs")
    est = ElasticNetCD(alpha=gamma, l1_ratio=l1_ratio, regularize=regularize,
                       fit_intercept=fit_intercept, **kwargs).fit(X, y)
    return est.coef_, est.intercept_


def fit_sig_model(rows, y, recipe: DesignRecipe, retained, penalty=("none", 0.0, 0.0),
                  standardize=True, column_names=None, **kwargs) -> SigRegressionModel:
    X = np.vstack(rows) if not isinstance(rows, np.ndarray) else rows
    y = np.asarray(y, dtype=float)
    scaler = None
    if standardize:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            scaler = Standardizer().fit(X)
        X = scaler.transform(X)
    coef, intercept = fit(X, y, penalty, recipe.fit_intercept, **kwargs)
    return SigRegressionModel(coef, intercept, scaler, recipe, list(retained),
                              list(column_names or []))


def fit_ar1(y) -> tuple[float, float]:
    """Least squares for ``y[t] = d0 + d1 * y[t-1]``."""
    y = np.asarray(y, dtype=float)
    if y.size < 3:
        raise ValueError("AR(1) fit needs at least 3 observations")
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite values in AR(1) series")
    lagged, current = y[:-1], y[1:]
    if np.ptp(lagged) == 0.0:
        warnings.warn("constant series; AR(1) slope set to 0", DegenerateSeriesWarning,
                      stacklevel=2)
        return float(current.mean()), 0.0
    xm, ym = lagged.mean(), current.mean()
    d1 = float(((lagged - xm) * (current - ym)).sum() / ((lagged - xm) ** 2).sum())
    return float(ym - d1 * xm), d1


def ar1_forecast(d0: float, d1: float, last: float, steps: int = 1) -> float:
    value = last
    for _ in range(max(steps, 1)):
        value = d0 + d1 * value
    return float(value)
