"""Input checks shared by the estimators."""
from __future__ import annotations

import numbers

import numpy as np


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_in(value, name: str, allowed) -> str:
    if value not in allowed:
        raise ValueError(f"{name}={value!r} not in {tuple(allowed)}")
    return value


def check_finite(arr, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_path_list(paths) -> list[np.ndarray]:
    """Accept one (n, d) array or a sequence of them; all must share d."""
    if isinstance(paths, np.ndarray) and paths.ndim == 2:
        paths = [paths]
    out = []
    dim = None
    for p in paths:
        p = check_finite(p, "path")
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2 or p.shape[0] < 2:
            raise ValueError("each path must be a 2-D array with at least 2 points")
        if dim is None:
            dim = p.shape[1]
        elif p.shape[1] != dim:
            raise ValueError(f"paths have inconsistent channel counts {dim} and {p.shape[1]}")
        out.append(p)
    if not out:
        raise ValueError("no paths given")
    return out
