"""Conditional quantile families fitted on a finite level set.

A family maps covariate rows to one fitted quantile per level. All
``predict`` calls return values rearranged to be nondecreasing across the
levels, so downstream core lengths are never negative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .data import Dataset
from .laws import ConditionalLaw, DEFAULT_TOL

__all__ = [
    "QuantileLevelSet",
    "QuantileFamily",
    "KnnQuantileFamily",
    "LinearPinballFamily",
    "OracleQuantileFamily",
    "KnnMean",
    "FitError",
    "rearrange_monotone",
    "default_k",
    "fit_knn",
    "fit_linear_pinball",
    "fit_knn_mean",
    "predict_levels",
    "pinball_loss",
]

LEVEL_MATCH_TOL = 1e-12


class FitError(RuntimeError):
    pass


class QuantileLevelSet:
    """Strictly increasing levels in (0, 1).

    Lookups go through :meth:`index`, which matches within
    ``LEVEL_MATCH_TOL`` so that levels built as ``1 - alpha + tau`` resolve
    to the same slot however they were rounded.
    """

    def __init__(self, levels):
        lv = np.asarray(levels, dtype=float).ravel()
        if lv.size == 0:
            raise ValueError("level set is empty")
        if np.any(lv <= 0) or np.any(lv >= 1):
            raise ValueError("levels must lie in (0, 1)")
        if np.any(np.diff(lv) <= 0):
            raise ValueError("levels must be strictly increasing")
        lv.setflags(write=False)
        self.levels = lv

    @classmethod
    def from_values(cls, values) -> "QuantileLevelSet":
        """Sorted, de-duplicated level set from arbitrary values."""
        v = np.sort(np.asarray(values, dtype=float).ravel())
        keep = [v[0]]
        for t in v[1:]:
            if t - keep[-1] > LEVEL_MATCH_TOL:
                keep.append(t)
        return cls(keep)

    def __len__(self):
        return self.levels.size

    def __iter__(self):
        return iter(self.levels)

    def index(self, level) -> np.ndarray | int:
        lv = np.asarray(level, dtype=float)
        pos = np.clip(np.searchsorted(self.levels, lv), 1, len(self) - 1)
        left = self.levels[pos - 1]
        right = self.levels[pos]
        pos = np.where(np.abs(lv - left) <= np.abs(right - lv), pos - 1, pos)
        if len(self) == 1:
            pos = np.zeros_like(pos)
        if np.any(np.abs(self.levels[pos] - lv) > LEVEL_MATCH_TOL):
            raise KeyError(f"level(s) {lv[np.abs(self.levels[pos] - lv) > LEVEL_MATCH_TOL]} not fitted")
        return int(pos) if pos.ndim == 0 else pos

    def __contains__(self, level) -> bool:
        try:
            self.index(level)
        except KeyError:
            return False
        return True

    def __repr__(self):
        return f"QuantileLevelSet({len(self)} levels in [{self.levels[0]:.4g}, {self.levels[-1]:.4g}])"


def rearrange_monotone(values):
    """Sort fitted quantiles ascending along the last (level) axis."""
    return np.sort(np.asarray(values, dtype=float), axis=-1)


def pinball_loss(residual, level):
    """Mean check loss ``rho_level(residual)``; broadcasts over levels."""
    r = np.asarray(residual, dtype=float)
    return np.mean(np.maximum(level * r, (level - 1.0) * r), axis=0)


def _as_rows(x, p: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    if x.ndim == 0:
        x = x[None]
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != p:
        raise ValueError(f"expected covariate rows with {p} columns, got shape {np.shape(x)}")
    return x, single


class QuantileFamily:
    """Base class; subclasses implement ``_raw(x)`` returning ``(n, L)``."""

    levels: QuantileLevelSet
    p: int

    def predict(self, x) -> np.ndarray:
        rows, single = _as_rows(x, self.p)
        out = rearrange_monotone(self._raw(rows))
        return out[0] if single else out

    def _raw(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def predict_levels(family: QuantileFamily, x) -> np.ndarray:
    """Rearranged quantiles of ``family`` at ``x``, one per level."""
    return family.predict(x)


def default_k(n_train: int) -> int:
    """``ceil(n ** 0.7)`` clipped to ``[10, n]``."""
    return int(min(n_train, max(10, math.ceil(n_train ** 0.7))))


class _Neighbors:
    def __init__(self, x: np.ndarray, scale: bool):
        self.shift = np.zeros(x.shape[1])
        self.span = np.ones(x.shape[1])
        if scale:
            self.shift = x.min(axis=0)
            span = x.max(axis=0) - self.shift
            self.span = np.where(span > 0, span, 1.0)
        self.tree = cKDTree((x - self.shift) / self.span)

    def query(self, x: np.ndarray, k: int) -> np.ndarray:
        _, idx = self.tree.query((x - self.shift) / self.span, k=k)
        return np.asarray(idx).reshape(x.shape[0], k)


class KnnQuantileFamily(QuantileFamily):
    """Level-``g`` quantile = ``ceil(k g)``-th order statistic of the k neighbours' responses."""

    def __init__(self, train: Dataset, levels: QuantileLevelSet, k: int, scale: bool = False):
        self.levels = levels
        self.k = int(k)
        self.p = train.p
        self._y = train.y.copy()
        self._nn = _Neighbors(train.x, scale)
        # the 1e-9 guards products like 126 * 0.905 that should be integers
        ranks = np.ceil(self.k * levels.levels - 1e-9).astype(int)
        self._rank_idx = np.clip(ranks, 1, self.k) - 1

    def neighbor_responses(self, x: np.ndarray) -> np.ndarray:
        return np.sort(self._y[self._nn.query(x, self.k)], axis=1)

    def _raw(self, x):
        return self.neighbor_responses(x)[:, self._rank_idx]


def fit_knn(train: Dataset, levels: QuantileLevelSet, k: int | None = None,
            scale: bool = False) -> KnnQuantileFamily:
    if train.n < 1:
        raise FitError("empty training set")
    k = default_k(train.n) if k is None else int(k)
    if not 1 <= k <= train.n:
        raise ValueError(f"k must be in [1, {train.n}], got {k}")
    return KnnQuantileFamily(train, levels, k, scale)


class KnnMean:
    """Neighbour-average regression used by the residual split-conformal baseline."""

    def __init__(self, train: Dataset, k: int, scale: bool = False):
        self.k = int(k)
        self.p = train.p
        self._y = train.y.copy()
        self._nn = _Neighbors(train.x, scale)

    def predict(self, x) -> np.ndarray:
        rows, single = _as_rows(x, self.p)
        out = self._y[self._nn.query(rows, self.k)].mean(axis=1)
        return out[0] if single else out


def fit_knn_mean(train: Dataset, k: int | None = None, scale: bool = False) -> KnnMean:
    k = default_k(train.n) if k is None else int(k)
    if not 1 <= k <= train.n:
        raise ValueError(f"k must be in [1, {train.n}], got {k}")
    return KnnMean(train, k, scale)


@dataclass(frozen=True)
class PinballOptions:
    max_iter: int = 20000
    step: float = 1.0
    tol: float = 1e-6
    check_every: int = 100


class LinearPinballFamily(QuantileFamily):
    """Linear quantile fits ``[1, x] @ coef[:, level]``."""

    def __init__(self, coef: np.ndarray, levels: QuantileLevelSet, objective: np.ndarray,
                 iterations: int):
        self.coef = coef
        self.levels = levels
        self.p = coef.shape[0] - 1
        self.objective = objective
        self.iterations = iterations

    def _raw(self, x):
        return self.coef[0] + x @ self.coef[1:]


def fit_linear_pinball(train: Dataset, levels: QuantileLevelSet,
                       opts: PinballOptions | None = None) -> LinearPinballFamily:
    """Averaged subgradient descent on the mean pinball loss, all levels at once.

    Covariates are standardized internally and the step at iteration ``t``
    is ``step / sqrt(t)``. Each level starts from its constant empirical
    quantile and keeps the best averaged iterate seen at the periodic
    checks, so the reported objective never exceeds that of the constant
    predictor. Stops when the relative change of the total checked
    objective drops below ``tol`` or the budget is spent.
    """
    opts = opts or PinballOptions()
    if train.n < 1:
        raise FitError("empty training set")
    g = levels.levels
    mu = train.x.mean(axis=0)
    sd = train.x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    z = np.column_stack([np.ones(train.n), (train.x - mu) / sd])
    y = train.y
    scale_y = max(float(np.std(y)), 1e-12)

    def objective(b):
        return pinball_loss(y[:, None] - z @ b, g)

    beta = np.zeros((z.shape[1], g.size))
    ys = np.sort(y)
    beta[0] = ys[np.clip(np.ceil(train.n * g - 1e-9).astype(int), 1, train.n) - 1]
    best = beta.copy()
    best_obj = objective(best)
    avg = beta.copy()
    prev_total = best_obj.sum()
    t_used = opts.max_iter
    for t in range(1, opts.max_iter + 1):
        r = y[:, None] - z @ beta
        sub = -(z.T @ (g - (r < 0))) / train.n
        beta = beta - (opts.step * scale_y / math.sqrt(t)) * sub
        avg += (beta - avg) / (t + 1)
        if t % opts.check_every == 0:
            obj = objective(avg)
            if not np.all(np.isfinite(obj)):
                raise FitError(f"non-finite pinball loss at iteration {t}")
            better = obj < best_obj
            best[:, better] = avg[:, better]
            best_obj = np.minimum(obj, best_obj)
            total = best_obj.sum()
            if abs(prev_total - total) <= opts.tol * max(abs(prev_total), 1e-300):
                t_used = t
                break
            prev_total = total
    coef = best.copy()
    coef[1:] = best[1:] / sd[:, None]
    coef[0] = best[0] - mu @ coef[1:]
    return LinearPinballFamily(coef, levels, best_obj, t_used)


class OracleQuantileFamily(QuantileFamily):
    """Exact conditional quantiles of a known law (zero estimation error)."""

    def __init__(self, law: ConditionalLaw, levels: QuantileLevelSet, p: int = 1,
                 tol: float = DEFAULT_TOL):
        self.law = law
        self.levels = levels
        self.p = p
        self.tol = tol

    def _raw(self, x):
        q = np.asarray(self.law.at(x).quantile(self.levels.levels, self.tol), dtype=float)
        return np.broadcast_to(q, (x.shape[0], len(self.levels))).copy()
