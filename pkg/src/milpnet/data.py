"""Dataset ingestion, scaling, splitting and synthetic generation."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import Dataset


class DataError(ValueError):
    """Raised for malformed input files or invalid split requests."""


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions (must sum to 1) plus a shuffle seed."""

    train: float
    val: float
    test: float
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train, self.val, self.test)
        if any(f < 0 or f > 1 for f in fracs):
            raise ValueError("split fractions must lie in [0, 1]")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {sum(fracs)}, expected 1")


@dataclass(frozen=True)
class MinMaxTransform:
    """Per-column affine map taking the fitted min to 0 and max to 1.

    Constant columns get scale 0, so they map to 0 and invert back to the
    fitted minimum.
    """

    mins: np.ndarray
    scales: np.ndarray

    def apply(self, samples) -> np.ndarray:
        x = np.atleast_2d(np.asarray(samples, dtype=float))
        return (x - self.mins) * self.scales

    def inverse(self, samples) -> np.ndarray:
        x = np.atleast_2d(np.asarray(samples, dtype=float))
        spans = np.where(self.scales > 0, 1.0 / np.where(self.scales > 0, self.scales, 1.0), 0.0)
        return x * spans + self.mins


def load_csv(path, label_column: int = -1, header: bool = False) -> Dataset:
    """Read a comma-separated numeric table into a Dataset.

    ``label_column`` selects the label field by position (negative indices
    count from the end).  Label values may be arbitrary strings or numbers;
    they are mapped to 0..c-1 in order of first appearance.  Rows with
    missing or non-numeric feature cells are rejected with their line
    number.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, record in enumerate(reader, start=1):
            if not record or all(cell.strip() == "" for cell in record):
                continue
            rows.append((lineno, [cell.strip() for cell in record]))
    if header:
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")

    width = len(rows[0][1])
    label_idx = label_column if label_column >= 0 else width + label_column
    if not 0 <= label_idx < width:
        raise DataError(f"label column {label_column} out of range for {width} fields")

    features, raw_labels = [], []
    for lineno, record in rows:
        if len(record) != width:
            raise DataError(f"{path}: row {lineno} has {len(record)} fields, expected {width}")
        feats = []
        for col, cell in enumerate(record):
            if col == label_idx:
                continue
            if cell == "":
                raise DataError(f"{path}: row {lineno} has a missing value")
            try:
                feats.append(float(cell))
            except ValueError:
                raise DataError(
                    f"{path}: row {lineno} has non-numeric feature {cell!r}"
                ) from None
        label = record[label_idx]
        if label == "":
            raise DataError(f"{path}: row {lineno} has a missing label")
        features.append(feats)
        raw_labels.append(label)

    mapping = {}
    labels = []
    for value in raw_labels:
        if value not in mapping:
            mapping[value] = len(mapping)
        labels.append(mapping[value])
    return Dataset(np.array(features, dtype=float), np.array(labels, dtype=int))


def minmax_scale(dataset: Dataset):
    """Scale every attribute to [0, 1]; returns the scaled set and the transform."""
    x = dataset.samples
    mins = x.min(axis=0)
    spans = x.max(axis=0) - mins
    scales = np.where(spans > 0, 1.0 / np.where(spans > 0, spans, 1.0), 0.0)
    transform = MinMaxTransform(mins=mins, scales=scales)
    return Dataset(transform.apply(x), dataset.labels), transform


def synthetic_random(m_total: int, n: int, seed: int = 0) -> Dataset:
    """Three-thirds random classification data.

    One third of the points is uniform in [0, 10]^n with label 1, one third
    uniform in [-10, 0]^n with label 0, and the rest (including any
    remainder when m_total is not divisible by 3) is uniform noise in
    [-1, 1]^n with random labels.  Rows are shuffled.
    """
    if m_total < 1:
        raise ValueError("m_total must be positive")
    rng = np.random.default_rng(seed)
    third = m_total // 3
    noise = m_total - 2 * third
    xs = [
        rng.uniform(0.0, 10.0, size=(third, n)),
        rng.uniform(-10.0, 0.0, size=(third, n)),
        rng.uniform(-1.0, 1.0, size=(noise, n)),
    ]
    ys = [
        np.ones(third, dtype=int),
        np.zeros(third, dtype=int),
        rng.integers(0, 2, size=noise),
    ]
    x = np.vstack(xs)
    y = np.concatenate(ys)
    order = rng.permutation(m_total)
    return Dataset(x[order], y[order])


def split(dataset: Dataset, spec: SplitSpec):
    """Disjoint covering train/val/test split with a seeded shuffle."""
    m = dataset.num_samples
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(m)
    n_train = int(round(spec.train * m))
    n_val = int(round(spec.val * m))
    n_train = min(n_train, m)
    n_val = min(n_val, m - n_train)
    n_test = m - n_train - n_val
    for name, frac, count in (
        ("train", spec.train, n_train),
        ("val", spec.val, n_val),
        ("test", spec.test, n_test),
    ):
        if frac > 0 and count == 0:
            raise DataError(f"{name} fraction {frac} rounds to an empty part for m={m}")
        if frac == 0 and count != 0:
            raise DataError(f"{name} fraction is 0 but rounding left {count} rows")
    parts = []
    start = 0
    for count in (n_train, n_val, n_test):
        idx = order[start : start + count]
        parts.append(dataset.subset(idx) if count else None)
        start += count
    return tuple(parts)
