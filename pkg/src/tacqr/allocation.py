"""Truncated allocation grid and per-covariate core selection."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quantiles import LEVEL_MATCH_TOL, QuantileFamily, QuantileLevelSet

__all__ = [
    "AllocationGrid",
    "CoreSelection",
    "build_grid",
    "grid_levels",
    "core_length",
    "core_lengths",
    "select_allocation",
    "select_allocations",
]


@dataclass(frozen=True)
class AllocationGrid:
    """Lower-tail allocations ``eps + j * mesh`` in ``[eps, alpha - eps]``.

    ``levels`` may additionally hold ``alpha / 2`` when ``include_half``.
    """

    alpha: float
    epsilon: float
    mesh: float
    n_cells: int
    levels: np.ndarray
    include_half: bool = False

    def __len__(self):
        return self.levels.size

    def upper(self) -> np.ndarray:
        return 1.0 - self.alpha + self.levels

    @property
    def has_half(self) -> bool:
        return bool(np.any(np.abs(self.levels - self.alpha / 2) <= LEVEL_MATCH_TOL))


@dataclass(frozen=True)
class CoreSelection:
    tau_hat: float
    lo: float
    hi: float
    length: float
    index: int


def build_grid(alpha: float, m: int, epsilon: float = 0.005,
               include_half: bool = True) -> AllocationGrid:
    """Grid with ``ceil(m ** (2/3))`` cells of width ``(alpha - 2 eps) / cells``."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not 0 < epsilon < alpha / 2:
        raise ValueError(f"epsilon must lie in (0, alpha/2) = (0, {alpha / 2}), got {epsilon}")
    if m < 1:
        raise ValueError(f"calibration size must be positive, got {m}")
    cells = math.ceil(m ** (2.0 / 3.0) - 1e-9)
    mesh = (alpha - 2 * epsilon) / cells
    taus = epsilon + mesh * np.arange(cells + 1)
    taus[-1] = alpha - epsilon
    if include_half:
        half = alpha / 2
        near = np.abs(taus - half) <= LEVEL_MATCH_TOL
        if near.any():
            taus[near] = half
        else:
            taus = np.sort(np.append(taus, half))
    taus.setflags(write=False)
    return AllocationGrid(alpha, epsilon, mesh, cells, taus, include_half)


def grid_levels(grid: AllocationGrid, symmetric: bool = True) -> QuantileLevelSet:
    """Endpoint levels ``G ∪ (1 - alpha + G)``, plus the equal-tailed pair."""
    vals = [grid.levels, grid.upper()]
    if symmetric:
        vals.append([grid.alpha / 2, 1 - grid.alpha / 2])
    return QuantileLevelSet.from_values(np.concatenate([np.ravel(v) for v in vals]))


def _pair_index(levels: QuantileLevelSet, tau, alpha: float):
    return levels.index(tau), levels.index(1.0 - alpha + np.asarray(tau, dtype=float))


def core_length(family: QuantileFamily, x, tau: float, alpha: float) -> float:
    """Fitted core length ``q[1 - alpha + tau](x) - q[tau](x)``."""
    lo_i, hi_i = _pair_index(family.levels, tau, alpha)
    q = family.predict(x)
    return float(q[hi_i] - q[lo_i])


def core_lengths(quantiles: np.ndarray, lo_idx, hi_idx) -> np.ndarray:
    """Core lengths for predicted quantile rows and level index pairs."""
    q = np.asarray(quantiles)
    return q[..., hi_idx] - q[..., lo_idx]


def select_allocations(quantiles: np.ndarray, levels: QuantileLevelSet, grid: AllocationGrid):
    """Vectorized smallest-minimizer selection over rows of predicted quantiles.

    Returns ``(grid_index, lo, hi)`` arrays. ``np.argmin`` picks the first
    minimum, i.e. the smallest allocation among ties.
    """
    lo_idx, hi_idx = _pair_index(levels, grid.levels, grid.alpha)
    q = np.atleast_2d(quantiles)
    lengths = q[:, hi_idx] - q[:, lo_idx]
    j = np.argmin(lengths, axis=1)
    rows = np.arange(q.shape[0])
    return j, q[rows, lo_idx[j]], q[rows, hi_idx[j]]


def select_allocation(family: QuantileFamily, x, grid: AllocationGrid,
                      alpha: float | None = None) -> CoreSelection:
    """Allocation minimizing the fitted core length at one covariate row.

    The scan runs left to right and moves only on strict improvement, so
    ties resolve to the smallest allocation.
    """
    if alpha is not None and abs(alpha - grid.alpha) > 1e-15:
        raise ValueError(f"grid was built for alpha={grid.alpha}, not {alpha}")
    lo_idx, hi_idx = _pair_index(family.levels, grid.levels, grid.alpha)
    q = family.predict(x)
    best = 0
    best_len = q[hi_idx[0]] - q[lo_idx[0]]
    for j in range(1, len(grid)):
        length = q[hi_idx[j]] - q[lo_idx[j]]
        if length < best_len:
            best, best_len = j, length
    lo, hi = float(q[lo_idx[best]]), float(q[hi_idx[best]])
    return CoreSelection(float(grid.levels[best]), lo, hi, hi - lo, best)
