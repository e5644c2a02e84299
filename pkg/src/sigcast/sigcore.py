"""Truncated path signatures of piecewise-linear paths.

Coefficients are stored flat, level by level, and within a level in
lexicographic word order (C-order of the level-k tensor). Letter 0 is the
time channel when the path is time-augmented. The level-0 term (always 1)
is implicit and never stored.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import factorial
from typing import Sequence

import numpy as np

__all__ = [
    "Path",
    "TruncatedSignature",
    "term_count",
    "words",
    "word_index",
    "segment_signature",
    "chen_product",
    "signature",
    "batch_signature",
    "levy_area",
    "filter_terms",
    "word_label",
    "KEEP_MODES",
]

KEEP_MODES = ("all", "all_linear", "innermost")


def term_count(d: int, level: int) -> int:
    """Number of stored coefficients, ``d + d**2 + ... + d**level``."""
    if d < 1 or level < 1:
        raise ValueError(f"need d >= 1 and level >= 1, got d={d}, level={level}")
    return sum(d**k for k in range(1, level + 1))


def words(d: int, level: int) -> list[tuple[int, ...]]:
    """All words up to ``level`` in storage order."""
    out: list[tuple[int, ...]] = []
    for k in range(1, level + 1):
        out.extend(product(range(d), repeat=k))
    return out


def word_index(word: Sequence[int], d: int) -> int:
    k = len(word)
    if k < 1:
        raise ValueError("empty word has no stored coefficient")
    offset = sum(d**j for j in range(1, k))
    pos = 0
    for letter in word:
        if not 0 <= letter < d:
            raise ValueError(f"letter {letter} outside [0, {d})")
        pos = pos * d + letter
    return offset + pos


def word_label(word: Sequence[int], names: Sequence[str]) -> str:
    return ",".join(names[i] for i in word)


@dataclass(frozen=True)
class Path:
    """Fully observed path; rows are points, columns are channels."""

    values: np.ndarray
    times: np.ndarray | None = None
    names: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ValueError("path values must be a 2-D array")
        if values.shape[0] < 2:
            raise ValueError(f"a path needs at least 2 points, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("path values contain missing or non-finite entries")
        object.__setattr__(self, "values", values)
        if self.times is not None:
            times = np.asarray(self.times, dtype=float)
            if times.shape != (values.shape[0],):
                raise ValueError("times must have one entry per path point")
            if np.any(np.diff(times) < 0):
                raise ValueError("path times must be non-decreasing")
            object.__setattr__(self, "times", times)
        names = tuple(self.names) or tuple(f"x{i}" for i in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise ValueError("one name per channel required")
        object.__setattr__(self, "names", names)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def one_variation(self) -> float:
        """Total variation under the Euclidean norm."""
        return float(np.linalg.norm(self.increments(), axis=1).sum())


@dataclass(frozen=True)
class TruncatedSignature:
    dim: int
    level: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        n = term_count(self.dim, self.level)
        if coeffs.shape != (n,):
            raise ValueError(
                f"expected {n} coefficients for dim={self.dim}, level={self.level}, "
                f"got shape {coeffs.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    def level_slice(self, k: int) -> slice:
        if not 1 <= k <= self.level:
            raise ValueError(f"level {k} outside [1, {self.level}]")
        start = term_count(self.dim, k - 1) if k > 1 else 0
        return slice(start, start + self.dim**k)

    def level_tensor(self, k: int) -> np.ndarray:
        return self.coeffs[self.level_slice(k)]

    def levels(self) -> list[np.ndarray]:
        return [self.level_tensor(k) for k in range(1, self.level + 1)]

    def __getitem__(self, word: Sequence[int]) -> float:
        if len(word) == 0:
            return 1.0
        if len(word) > self.level:
            raise KeyError(f"word {tuple(word)} exceeds truncation level {self.level}")
        return float(self.coeffs[word_index(word, self.dim)])

    def words(self) -> list[tuple[int, ...]]:
        return words(self.dim, self.level)


def _exp_levels(delta: np.ndarray, level: int) -> list[np.ndarray]:
    # level-k term of exp(delta) is delta^{(x)k} / k!
    out = [delta.copy()]
    for k in range(2, level + 1):
        out.append(np.outer(out[-1], delta).ravel() / k)
    return out


def segment_signature(delta, level: int) -> TruncatedSignature:
    """Signature of a single straight segment with increment ``delta``."""
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if level < 1:
        raise ValueError("level must be >= 1")
    return TruncatedSignature(delta.size, level, np.concatenate(_exp_levels(delta, level)))


def _product_levels(a: list[np.ndarray], b: list[np.ndarray]) -> list[np.ndarray]:
    out = []
    for k in range(1, len(a) + 1):
        term = a[k - 1] + b[k - 1]
        for j in range(1, k):
            term = term + np.outer(a[j - 1], b[k - j - 1]).ravel()
        out.append(term)
    return out


def chen_product(a: TruncatedSignature, b: TruncatedSignature) -> TruncatedSignature:
    """Truncated tensor product: signature of ``a``'s path followed by ``b``'s."""
    if a.dim != b.dim or a.level != b.level:
        raise ValueError(
            f"cannot multiply signatures of (dim={a.dim}, level={a.level}) "
            f"and (dim={b.dim}, level={b.level})"
        )
    levels = _product_levels(a.levels(), b.levels())
    return TruncatedSignature(a.dim, a.level, np.concatenate(levels))


def _fold_increments(increments: np.ndarray, level: int) -> list[np.ndarray]:
    # In-place right multiplication by each segment exponential, highest level
    # first so lower levels are still the old values when read.
    d = increments.shape[1]
    sig = [np.zeros(d**k) for k in range(1, level + 1)]
    for delta in increments:
        if not delta.any():
            continue
        e = _exp_levels(delta, level)
        for k in range(level, 0, -1):
            acc = sig[k - 1] + e[k - 1]
            for j in range(1, k):
                acc += np.outer(sig[j - 1], e[k - j - 1]).ravel()
            sig[k - 1] = acc
    return sig


def signature(path: Path | np.ndarray, level: int) -> TruncatedSignature:
    """Exact truncated signature of the piecewise-linear interpolation of ``path``."""
    if not isinstance(path, Path):
        path = Path(path)
    if level < 1:
        raise ValueError("level must be >= 1")
    sig = _fold_increments(path.increments(), level)
    return TruncatedSignature(path.dim, level, np.concatenate(sig))


def batch_signature(increments: np.ndarray, level: int) -> np.ndarray:
    """Signatures of many paths at once.

    ``increments`` has shape (batch, steps, d). Paths of unequal length are
    padded with zero increments, which act as the identity.
    Returns an array of shape (batch, term_count(d, level)).
    """
    inc = np.asarray(increments, dtype=float)
    if inc.ndim != 3:
        raise ValueError("increments must have shape (batch, steps, d)")
    batch, steps, d = inc.shape
    sig = [np.zeros((batch, d**k)) for k in range(1, level + 1)]
    for s in range(steps):
        delta = inc[:, s, :]
        e = [delta]
        for k in range(2, level + 1):
            e.append((e[-1][:, :, None] * delta[:, None, :]).reshape(batch, -1) / k)
        for k in range(level, 0, -1):
            acc = sig[k - 1] + e[k - 1]
            for j in range(1, k):
                acc += (sig[j - 1][:, :, None] * e[k - j - 1][:, None, :]).reshape(batch, -1)
            sig[k - 1] = acc
    return np.concatenate(sig, axis=1)


def levy_area(sig: TruncatedSignature, i: int, j: int) -> float:
    if sig.level < 2:
        raise ValueError("Levy area needs signature level >= 2")
    if i == j:
        raise ValueError("Levy area needs two distinct channels")
    return 0.5 * (sig[(i, j)] - sig[(j, i)])


def _keep(word: tuple[int, ...], mode: str, time_channel: int, t_level: int) -> bool:
    n_time = sum(1 for c in word if c == time_channel)
    if n_time == len(word):
        return mode == "all" or len(word) <= t_level
    if mode == "all":
        return True
    if mode == "all_linear":
        return len(word) - n_time == 1
    # innermost: data letter first, time letters after
    return word[0] != time_channel and n_time == len(word) - 1


def filter_terms(
    sig: TruncatedSignature,
    mode: str = "all",
    time_channel: int | None = 0,
    t_level: int | None = None,
) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """Select signature terms by word shape.

    ``all`` keeps every term. ``all_linear`` keeps words with exactly one
    non-time letter, ``innermost`` only words ``(x, t, ..., t)``; both also
    keep pure-time words up to ``t_level``. Returns (values, words).
    """
    if mode not in KEEP_MODES:
        raise ValueError(f"unknown keep mode {mode!r}; expected one of {KEEP_MODES}")
    t_level = sig.level if t_level is None else t_level
    if t_level > sig.level:
        raise ValueError(f"t_level={t_level} exceeds signature level {sig.level}")
    if mode != "all":
        if time_channel is None or not 0 <= time_channel < sig.dim:
            raise ValueError(f"mode {mode!r} needs a valid time channel, got {time_channel}")
    all_words = sig.words()
    if mode == "all":
        return sig.coeffs.copy(), all_words
    mask = np.array([_keep(w, mode, time_channel, t_level) for w in all_words])
    return sig.coeffs[mask], [w for w, m in zip(all_words, mask) if m]


def retained_words(
    d: int, level: int, mode: str, time_channel: int | None = 0, t_level: int | None = None
) -> list[tuple[int, ...]]:
    """Words ``filter_terms`` would keep, without computing a signature."""
    dummy = TruncatedSignature(d, level, np.zeros(term_count(d, level)))
    return filter_terms(dummy, mode, time_channel, t_level)[1]


def keep_mask(
    d: int, level: int, mode: str, time_channel: int | None = 0, t_level: int | None = None
) -> np.ndarray:
    kept = set(retained_words(d, level, mode, time_channel, t_level))
    return np.array([w in kept for w in words(d, level)])


def factorial_bound(variation: float, k: int) -> float:
    return variation**k / factorial(k)


from sklearn.base import BaseEstimator, TransformerMixin  # noqa: E402
from sklearn.utils.validation import check_is_fitted  # noqa: E402

from ._validation import check_in, check_path_list, check_positive_int  # noqa: E402


class SignatureTransformer(TransformerMixin, BaseEstimator):
    """Map a collection of paths to rows of filtered signature terms.

    Parameters
    ----------
    level : int
        Truncation level.
    keep_sigs : {"all", "all_linear", "innermost"}
        Which words to keep, see :func:`filter_terms`.
    t_level : int or None
        Highest level kept for pure-time words (``None`` means ``level``).
    time_augment : bool
        Prepend ``times`` (or point index when not given) as channel 0.
    basepoint : bool
        Prepend a zero point to every path.
    """

    def __init__(self, level=2, keep_sigs="all", t_level=None, time_augment=False,
                 basepoint=False):
        self.level = level
        self.keep_sigs = keep_sigs
        self.t_level = t_level
        self.time_augment = time_augment
        self.basepoint = basepoint

    def _prepare(self, p: np.ndarray) -> np.ndarray:
        if self.time_augment:
            p = np.column_stack([np.arange(p.shape[0], dtype=float), p])
        if self.basepoint:
            p = np.vstack([np.zeros(p.shape[1]), p])
        return p

    def fit(self, X, y=None):
        check_positive_int(self.level, "level")
        check_in(self.keep_sigs, "keep_sigs", KEEP_MODES)
        paths = check_path_list(X)
        self.n_channels_ = paths[0].shape[1] + int(self.time_augment)
        time_channel = 0 if self.time_augment else None
        if self.keep_sigs != "all" and time_channel is None:
            raise ValueError(f"keep_sigs={self.keep_sigs!r} requires time_augment=True")
        self.words_ = retained_words(
            self.n_channels_, self.level, self.keep_sigs, time_channel, self.t_level
        )
        self.mask_ = keep_mask(
            self.n_channels_, self.level, self.keep_sigs, time_channel, self.t_level
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "words_")
        paths = check_path_list(X)
        rows = []
        for p in paths:
            p = self._prepare(p)
            if p.shape[1] != self.n_channels_:
                raise ValueError(
                    f"path has {p.shape[1]} channels after augmentation, "
                    f"expected {self.n_channels_}"
                )
            rows.append(signature(Path(p), self.level).coeffs[self.mask_])
        return np.vstack(rows)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "words_")
        n_data = self.n_channels_ - int(self.time_augment)
        if input_features is None:
            input_features = [f"x{i + 1}" for i in range(n_data)]
        names = (["t"] if self.time_augment else []) + list(input_features)
        return np.array([word_label(w, names) for w in self.words_], dtype=object)
