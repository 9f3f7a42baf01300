"""Datasets, seeded splitting and CSV ingestion.

Randomness throughout the package comes from numpy's ``Philox`` generator,
a counter-based bit generator. Replicate and sub-stream seeds are derived
with :func:`derive_seed`, which pushes ``seed ^ index`` through the
SplitMix64 finalizer so that neighbouring indices give unrelated streams.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "SplitIndices",
    "DataError",
    "derive_seed",
    "make_rng",
    "load_csv",
    "split_dataset",
]

_MASK64 = (1 << 64) - 1


class DataError(ValueError):
    """Raised for malformed datasets or input files."""


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Child seed for stream ``index`` of ``seed`` (SplitMix64 of the XOR)."""
    return _splitmix64((int(seed) ^ int(index)) & _MASK64)


def make_rng(seed: int) -> np.random.Generator:
    """Philox-backed generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & _MASK64))


@dataclass(frozen=True)
class Dataset:
    """Covariate matrix ``x`` (n, p) and response vector ``y`` (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or y.ndim != 1:
            raise DataError("x must be 2-D and y 1-D")
        if x.shape[0] != y.shape[0]:
            raise DataError(f"x has {x.shape[0]} rows but y has {y.shape[0]} entries")
        if x.shape[0] < 1:
            raise DataError("dataset is empty")
        if x.shape[1] < 1:
            raise DataError("dataset needs at least one covariate column")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains NaN or infinite values")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.x[idx], self.y[idx])


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    calib: np.ndarray
    test: np.ndarray

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.calib), len(self.test)


def split_dataset(data: Dataset, fractions=(0.5, 0.25, 0.25), seed: int = 0) -> SplitIndices:
    """Random train/calibration/test partition.

    Train and calibration sizes are ``floor(n * f)``; the remainder goes to
    the test set. Indices within each part are returned sorted.
    """
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f <= 0 for f in fr):
        raise DataError(f"fractions must be three positive numbers, got {fractions}")
    if abs(sum(fr) - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1, got {sum(fr)!r}")
    n = data.n
    # the slack keeps e.g. 100 * 0.29 from flooring to 28
    n_train = int(math.floor(n * fr[0] + 1e-9))
    n_calib = int(math.floor(n * fr[1] + 1e-9))
    n_test = n - n_train - n_calib
    if min(n_train, n_calib, n_test) < 1:
        raise DataError(
            f"split of n={n} by {fr} leaves an empty part "
            f"(sizes {n_train}, {n_calib}, {n_test})"
        )
    perm = make_rng(seed).permutation(n)
    return SplitIndices(
        train=np.sort(perm[:n_train]),
        calib=np.sort(perm[n_train:n_train + n_calib]),
        test=np.sort(perm[n_train + n_calib:]),
    )


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell {cell!r} at row {row}, column {col!r}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite cell {cell!r} at row {row}, column {col!r}")
    return value


def read_numeric_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and float matrix of a comma-separated UTF-8 file.

    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=","))
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    body = [(i + 2, r) for i, r in enumerate(rows[1:]) if any(c.strip() for c in r)]
    if not body:
        raise DataError(f"{path}: no data rows")
    values = np.empty((len(body), len(header)))
    for i, (line, r) in enumerate(body):
        if len(r) != len(header):
            raise DataError(f"{path}: row {line} has {len(r)} cells, header has {len(header)}")
        for j, cell in enumerate(r):
            values[i, j] = _parse_float(cell.strip(), line, header[j])
    return header, values


def load_csv(path, response_column: str) -> Dataset:
    """Load a dataset; every column except ``response_column`` is a covariate."""
    header, values = read_numeric_csv(path)
    if response_column not in header:
        raise DataError(f"{path}: missing response column {response_column!r}")
    j = header.index(response_column)
    cov = [k for k in range(len(header)) if k != j]
    if not cov:
        raise DataError(f"{path}: no covariate columns besides {response_column!r}")
    return Dataset(values[:, cov], values[:, j])
