"""First principal component per group of predictor columns."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

GLOBAL = "global"


@dataclass(frozen=True)
class GroupLoading:
    """Standardization and unit loading vector of one factor group."""

    name: str
    columns: tuple[str, ...]
    mean: np.ndarray
    scale: np.ndarray
    loading: np.ndarray
    flipped: bool
    explained_variance: float

    def project(self, values: np.ndarray) -> np.ndarray:
        return ((values - self.mean) / self.scale) @ self.loading


def resolve_structure(structure, columns) -> dict[str, list[str]]:
    """Expand ``"global"``/``"all"`` groups and check every column exists."""
    columns = list(columns)
    out = {}
    for name, cols in structure.items():
        if cols in ("all", "*", GLOBAL) or (name == GLOBAL and not cols):
            cols = columns
        cols = [str(c) for c in cols]
        missing = [c for c in cols if c not in columns]
        if missing:
            raise ValueError(f"factor group {name!r}: unknown column(s) {', '.join(missing)}")
        if not cols:
            raise ValueError(f"factor group {name!r} is empty")
        out[str(name)] = cols
    return out


def _fix_sign(v: np.ndarray) -> tuple[np.ndarray, bool]:
    flip = v[np.argmax(np.abs(v))] < 0
    return (-v if flip else v), bool(flip)


def _fit_block(name: str, cols, Z_raw: np.ndarray, labels: list[str]) -> list[GroupLoading]:
    mean = Z_raw.mean(axis=0)
    scale = Z_raw.std(axis=0)
    const = scale <= 1e-12 * np.maximum(1.0, np.abs(mean))
    if const.all():
        raise ValueError(f"factor group {name!r}: all columns are constant over the fit rows")
    scale = np.where(const, 1.0, scale)
    Z = (Z_raw - mean) / scale
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    n = len(Z_raw)
    out = []
    for i, label in enumerate(labels[:len(s)]):
        v, flipped = _fix_sign(vt[i])
        out.append(GroupLoading(label, tuple(cols), mean, scale, v, flipped, float(s[i] ** 2 / n)))
    return out


class GroupPCA(TransformerMixin, BaseEstimator):
    """One leading component per factor group.

    Parameters
    ----------
    structure : dict or None
        Group name to column list. ``None`` fits ``k`` components over all
        columns, named ``pc1..pck``.
    k : int
        Components to keep when no structure is given.

    Columns are standardized with the population standard deviation over
    the fit rows. The sign of each loading is chosen so that its entry with
    the largest magnitude is positive.
    """

    def __init__(self, structure=None, k=1):
        self.structure = structure
        self.k = k

    def fit(self, X, y=None):
        X = _as_frame(X)
        if len(X) < 2:
            raise ValueError("PCA needs at least 2 rows")
        if X.isna().to_numpy().any():
            raise ValueError("PCA input contains missing values; fill them first")
        groups = []
        if self.structure:
            for name, cols in resolve_structure(self.structure, X.columns).items():
                groups += _fit_block(name, cols, X[cols].to_numpy(float), [name])
        else:
            if self.k < 1:
                raise ValueError(f"k must be >= 1, got {self.k}")
            cols = [str(c) for c in X.columns]
            labels = [f"pc{i + 1}" for i in range(int(self.k))]
            groups = _fit_block("all columns", cols, X.to_numpy(float), labels)
        self.groups_ = groups
        self.feature_names_in_ = np.array([str(c) for c in X.columns], dtype=object)
        return self

    def transform(self, X):
        check_is_fitted(self, "groups_")
        X = _as_frame(X)
        data = {g.name: g.project(X[list(g.columns)].to_numpy(float)) for g in self.groups_}
        return pd.DataFrame(data, index=X.index)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "groups_")
        return np.array([g.name for g in self.groups_], dtype=object)


def _as_frame(X) -> pd.DataFrame:
    if isinstance(X, pd.DataFrame):
        out = X.copy()
        out.columns = [str(c) for c in out.columns]
        return out
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D table")
    return pd.DataFrame(arr, columns=[f"x{i + 1}" for i in range(arr.shape[1])])


def fit_pca(rows, structure=None, k: int = 1) -> GroupPCA:
    return GroupPCA(structure, k).fit(rows)


def transform(model: GroupPCA, rows) -> pd.DataFrame:
    return model.transform(rows)
