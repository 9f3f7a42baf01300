"""Split-conformal calibration for tail-allocation CQR and its baselines.

Three methods share one calibration path:

``TA``
    per-point allocation chosen from the fitted quantiles, core inflated
    by the conformal radius of the two-sided clamped score;
``EqualTailCQR``
    the same score with the allocation fixed at ``alpha / 2``;
``ResidualSC``
    ``mean(x) ± Q`` with ``Q`` the conformal quantile of absolute residuals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .allocation import AllocationGrid, select_allocations
from .data import Dataset
from .quantiles import KnnMean, QuantileFamily

__all__ = [
    "METHODS",
    "CalibratedPredictor",
    "PredictionInterval",
    "Intervals",
    "score_two_sided",
    "conformal_rank",
    "conformal_quantile",
    "calibrate",
    "predict_interval",
    "predict_intervals",
]

METHODS = ("TA", "EqualTailCQR", "ResidualSC")


def score_two_sided(lo, hi, y):
    """``max(lo - y, y - hi, 0)``; broadcasts."""
    return np.maximum(np.maximum(np.subtract(lo, y), np.subtract(y, hi)), 0.0)


def conformal_rank(m: int, alpha: float) -> int:
    """``ceil((m + 1)(1 - alpha))``; equals ``m + 1`` for very small ``m``."""
    if m < 1:
        raise ValueError("calibration size must be positive")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    # guard against (m + 1)(1 - alpha) landing a hair above an integer
    return int(math.ceil((m + 1) * (1 - alpha) - 1e-9))


def conformal_quantile(scores, alpha: float) -> float:
    """k-th smallest score, or ``inf`` when ``k = m + 1``."""
    s = np.sort(np.asarray(scores, dtype=float).ravel())
    if s.size == 0:
        raise ValueError("no calibration scores")
    if not np.all(np.isfinite(s)):
        raise ValueError("calibration scores must be finite")
    k = conformal_rank(s.size, alpha)
    return math.inf if k > s.size else float(s[k - 1])


@dataclass(frozen=True)
class PredictionInterval:
    lo: float
    hi: float

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def __contains__(self, y) -> bool:
        return self.lo <= y <= self.hi


@dataclass(frozen=True)
class Intervals:
    """Batch prediction output; ``tau_hat`` is NaN for ResidualSC."""

    lo: np.ndarray
    hi: np.ndarray
    core_lo: np.ndarray
    core_hi: np.ndarray
    tau_hat: np.ndarray
    grid_index: np.ndarray | None = None

    @property
    def length(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def core_length(self) -> np.ndarray:
        return self.core_hi - self.core_lo

    def covers(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return (self.lo <= y) & (y <= self.hi)


@dataclass(frozen=True)
class CalibratedPredictor:
    method: str
    model: QuantileFamily | KnnMean
    alpha: float
    Q: float
    grid: AllocationGrid | None = None
    support: tuple[float, float] | None = None
    scores: np.ndarray = field(default=None, repr=False)

    @property
    def rank(self) -> int:
        return conformal_rank(len(self.scores), self.alpha)

    def cores(self, x) -> Intervals:
        """Uncalibrated cores at covariate rows ``x`` (2-D)."""
        x = np.asarray(x, dtype=float)
        if self.method == "ResidualSC":
            mu = self.model.predict(x)
            return Intervals(mu, mu, mu, mu, np.full(mu.shape, np.nan))
        q = self.model.predict(x)
        levels = self.model.levels
        if self.method == "TA":
            j, lo, hi = select_allocations(q, levels, self.grid)
            return Intervals(lo, hi, lo, hi, self.grid.levels[j], j)
        lo = q[:, levels.index(self.alpha / 2)]
        hi = q[:, levels.index(1 - self.alpha / 2)]
        return Intervals(lo, hi, lo, hi, np.full(lo.shape, self.alpha / 2))


def calibrate(method: str, model, grid: AllocationGrid | None, calib: Dataset, alpha: float,
              support: tuple[float, float] | None = None) -> CalibratedPredictor:
    """Compute calibration scores on ``calib`` and the conformal radius.

    Allocation choices at calibration points use only their covariates.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if calib is None or calib.n < 1:
        raise ValueError("calibration set is empty")
    if method == "TA" and grid is None:
        raise ValueError("TA calibration needs an allocation grid")
    if grid is not None and abs(grid.alpha - alpha) > 1e-15:
        raise ValueError("grid alpha does not match calibration alpha")
    if support is not None:
        support = (float(support[0]), float(support[1]))
        if not support[0] < support[1]:
            raise ValueError(f"support must satisfy lower < upper, got {support}")
    draft = CalibratedPredictor(method, model, alpha, 0.0, grid, support)
    cores = draft.cores(calib.x)
    if method == "ResidualSC":
        scores = np.abs(calib.y - cores.core_lo)
    else:
        scores = score_two_sided(cores.core_lo, cores.core_hi, calib.y)
    Q = conformal_quantile(scores, alpha)
    scores.setflags(write=False)
    return CalibratedPredictor(method, model, alpha, Q, grid, support, scores)


def _inflate(pred: CalibratedPredictor, cores: Intervals) -> Intervals:
    with np.errstate(invalid="ignore"):
        lo = cores.core_lo - pred.Q
        hi = cores.core_hi + pred.Q
    if pred.support is not None:
        s_lo, s_hi = pred.support
        lo = np.clip(lo, s_lo, s_hi)
        hi = np.clip(hi, s_lo, s_hi)
    return Intervals(lo, hi, cores.core_lo, cores.core_hi, cores.tau_hat, cores.grid_index)


def predict_intervals(pred: CalibratedPredictor, x) -> Intervals:
    """Calibrated intervals for a batch of covariate rows.

    With a configured support the interval is intersected with it; a core
    lying wholly outside the support collapses to the nearest support end.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if pred.model.p == 1 else x[None, :]
    return _inflate(pred, pred.cores(x))


def predict_interval(pred: CalibratedPredictor, x) -> PredictionInterval:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    out = predict_intervals(pred, x)
    return PredictionInterval(float(out.lo[0]), float(out.hi[0]))
