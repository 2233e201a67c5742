"""Compression-level models: encoded size and inference reliability tables.

The simulator replaces a real codec and classifier with lookup tables over
the discrete level set (JPEG-quality-like, 1..100 by default). Defaults:

  * bits per pattern: affine in level from an 800-bit floor up to 24576 bits
    (a raw 32x32x3-byte pattern) at the top level;
  * reliability: a saturating logistic in level, rescaled so level 1 maps to
    0.20, level 100 to 0.92, and the mean over all levels is 0.69.

Both tables can be replaced by two-column CSV files (level, value).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

MIN_BITS_DEFAULT = 800
MAX_BITS_DEFAULT = 24576
ACC_LOW_DEFAULT = 0.20
ACC_HIGH_DEFAULT = 0.92
# Logistic midpoint calibrated so the uniform-over-levels mean lands on 0.69.
ACC_LOGISTIC_MID = 28.65752564556869
ACC_LOGISTIC_WIDTH = 12.0


@dataclass(frozen=True)
class CompressionModel:
    """Ordered discrete level set with total bits/accuracy tables."""

    levels: np.ndarray
    bits: np.ndarray
    accuracy: np.ndarray
    stochastic: bool = False
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.int64)
        bits = np.asarray(self.bits, dtype=np.int64)
        acc = np.asarray(self.accuracy, dtype=np.float64)
        if not (len(levels) == len(bits) == len(acc)) or len(levels) == 0:
            raise ValueError("levels, bits, and accuracy tables must have equal nonzero length")
        if np.any(np.diff(levels) <= 0):
            raise ValueError("levels must be strictly increasing")
        if np.any(bits <= 0):
            raise ValueError("bits per pattern must be positive")
        if np.any(np.diff(bits) < 0):
            raise ValueError("bits table must be non-decreasing in level")
        if np.any((acc < 0.0) | (acc > 1.0)):
            raise ValueError("accuracy values must lie in [0, 1]")
        if np.any(np.diff(acc) < 0):
            raise ValueError("accuracy table must be non-decreasing in level")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "accuracy", acc)
        object.__setattr__(self, "_index", {int(c): i for i, c in enumerate(levels)})

    def __len__(self) -> int:
        return len(self.levels)

    def position(self, level: int) -> int:
        try:
            return self._index[int(level)]
        except KeyError:
            raise ValueError(f"unknown compression level {level}") from None


def bits_per_pattern(model: CompressionModel, level: int) -> int:
    """Encoded size of one pattern at the given level, in bits."""
    return int(model.bits[model.position(level)])


def accuracy_of(model: CompressionModel, level: int) -> float:
    """Inference reliability at the given level; pure table lookup."""
    return float(model.accuracy[model.position(level)])


def realized_accuracy(model: CompressionModel, level: int, rng: np.random.Generator) -> float:
    """Slot accuracy: the table value, or a Bernoulli draw in stochastic mode."""
    g = accuracy_of(model, level)
    if model.stochastic:
        return 1.0 if rng.random() < g else 0.0
    return g


def default_model(levels: np.ndarray | None = None, stochastic: bool = False) -> CompressionModel:
    """Build the default affine-bits / logistic-accuracy model."""
    if levels is None:
        levels = np.arange(1, 101, dtype=np.int64)
    levels = np.asarray(levels, dtype=np.int64)
    lo, hi = levels[0], levels[-1]
    span = max(1, hi - lo)
    frac = (levels - lo) / span
    bits = np.rint(MIN_BITS_DEFAULT + (MAX_BITS_DEFAULT - MIN_BITS_DEFAULT) * frac).astype(np.int64)

    raw = 1.0 / (1.0 + np.exp(-(levels - ACC_LOGISTIC_MID) / ACC_LOGISTIC_WIDTH))
    if raw[-1] > raw[0]:
        acc = ACC_LOW_DEFAULT + (ACC_HIGH_DEFAULT - ACC_LOW_DEFAULT) * (raw - raw[0]) / (raw[-1] - raw[0])
    else:
        acc = np.full(len(levels), ACC_HIGH_DEFAULT)  # single level: no curve to span
    return CompressionModel(levels=levels, bits=bits, accuracy=acc, stochastic=stochastic)


def _load_table_csv(path: str, levels: np.ndarray) -> np.ndarray:
    table: dict[int, float] = {}
    with open(path, newline="") as fh:
        for row_num, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{row_num}: expected two columns (level, value)")
            try:
                table[int(row[0])] = float(row[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{row_num}: {exc}") from None
    missing = [int(c) for c in levels if int(c) not in table]
    if missing:
        raise ValueError(f"{path}: missing levels {missing[:8]}{'...' if len(missing) > 8 else ''}")
    return np.array([table[int(c)] for c in levels])


def model_from_csv(levels: np.ndarray, bits_path: str | None, accuracy_path: str | None,
                   stochastic: bool = False) -> CompressionModel:
    """Default model with either table overridden from a (level, value) CSV."""
    base = default_model(levels)
    bits = _load_table_csv(bits_path, levels).astype(np.int64) if bits_path else base.bits
    acc = _load_table_csv(accuracy_path, levels) if accuracy_path else base.accuracy
    return CompressionModel(levels=levels, bits=bits, accuracy=acc, stochastic=stochastic)
