"""Iterative data-splitting trainer: shared activation patterns per cluster.

Training starts with every point in one cell, so the partitioned model has
a single activation block.  Each epoch solves the partitioned model on a
random batch, scores the decoded network on a validation set, then splits
the worst-scoring cell in two with 2-means, growing the partition by one
cell.  The returned parameters are the ones with the best validation
accuracy over all epochs; per-epoch loss is allowed to fluctuate because
each epoch sees a fresh batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    BdnnParams,
    Dataset,
    NetworkSpec,
    compute_metrics,
    dataset_loss,
    empirical_loss,
    forward,
    predict_many,
)
from .model import BuildOptions, build_partitioned, build_robust
from .robust import UncertaintySpec
from .solver import SolverConfig, solve


class DatasplitError(RuntimeError):
    """Solver failure mid-run; carries the epoch log gathered so far."""

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


@dataclass(frozen=True)
class Partition:
    """Disjoint nonempty index cells covering 0..m-1."""

    cells: tuple

    def __post_init__(self):
        cells = tuple(tuple(int(i) for i in cell) for cell in self.cells)
        if not cells or any(len(c) == 0 for c in cells):
            raise ValueError("cells must be nonempty")
        flat = [i for cell in cells for i in cell]
        if len(set(flat)) != len(flat):
            raise ValueError("cells must be disjoint")
        if set(flat) != set(range(len(flat))):
            raise ValueError("cells must cover 0..m-1")
        object.__setattr__(self, "cells", cells)

    @property
    def size(self) -> int:
        return len(self.cells)


@dataclass
class EpochRecord:
    epoch: int
    num_cells: int
    batch: list
    objective: Optional[float]
    train_loss: float
    val_accuracy: float
    split_cell: Optional[int]
    cells: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "epoch": self.epoch,
                "num_cells": self.num_cells,
                "batch": list(self.batch),
                "objective": self.objective,
                "train_loss": self.train_loss,
                "val_accuracy": self.val_accuracy,
                "split_cell": self.split_cell,
                "cells": [list(c) for c in self.cells],
            }
        )


@dataclass
class DatasplitResult:
    params: BdnnParams
    best_val_accuracy: float
    best_epoch: int
    records: list


def kmeans(points, k: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-9):
    """Lloyd's iterations from k-means++ seeding.

    Empty clusters are repaired by reassigning the point farthest from its
    centroid, so every returned cluster is nonempty.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"cannot form {k} clusters from {n} points")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, pts.shape[1]))
    centroids[0] = pts[rng.integers(n)]
    for c in range(1, k):
        d2 = np.min(
            ((pts[:, None, :] - centroids[None, :c, :]) ** 2).sum(axis=2), axis=1
        )
        total = d2.sum()
        if total <= 0:
            centroids[c] = pts[rng.integers(n)]
        else:
            centroids[c] = pts[rng.choice(n, p=d2 / total)]

    assign = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        dists = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(dists, axis=1)
        for c in range(k):  # repair empty clusters with the worst-fit point
            if not np.any(assign == c):
                farthest = int(np.argmax(dists[np.arange(n), assign]))
                assign[farthest] = c
                dists[farthest, :] = 0.0
        new_centroids = np.array(
            [pts[assign == c].mean(axis=0) for c in range(k)]
        )
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break
    return assign, centroids


def select_split_cell(partition: Partition, cell_losses) -> int:
    """Worst cell by summed loss; ties go to the larger cell, then lowest index."""
    losses = np.asarray(cell_losses, dtype=float)
    if losses.shape[0] != partition.size:
        raise ValueError("one loss per cell required")
    best = 0
    for g in range(1, partition.size):
        if losses[g] > losses[best] + 1e-12:
            best = g
        elif abs(losses[g] - losses[best]) <= 1e-12 and len(
            partition.cells[g]
        ) > len(partition.cells[best]):
            best = g
    return best


def _splittable(points) -> bool:
    return points.shape[0] >= 2 and not np.allclose(points, points[0])


def train_datasplit(
    train: Dataset,
    val: Dataset,
    network: NetworkSpec,
    epochs: int,
    batch_size: int,
    seed: int = 0,
    epsilon: float = 1e-4,
    robust: Optional[UncertaintySpec] = None,
    solver_config: Optional[SolverConfig] = None,
    log_path=None,
) -> DatasplitResult:
    """Run the iterative splitting loop and keep the best-validating network."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    config = solver_config or SolverConfig()
    rng = np.random.default_rng(seed)
    m = train.num_samples
    partition = Partition((tuple(range(m)),))

    best_params = None
    best_acc = -1.0
    best_epoch = -1
    records = []
    log_fh = open(log_path, "a") if log_path else None
    try:
        for epoch in range(1, epochs + 1):
            batch = tuple(sorted(rng.choice(m, size=min(batch_size, m), replace=False)))
            options = BuildOptions(
                epsilon_strict=epsilon,
                partition=partition.cells,
                batch=batch,
                robust=robust,
            )
            if robust is None:
                model = build_partitioned(train, network, options)
            else:
                model = build_robust(train, network, options)
            result = solve(model, config)
            if result.incumbent is None:
                raise DatasplitError(
                    f"epoch {epoch}: solver returned {result.status.value}", records
                )
            params = model.decode(result.incumbent)

            val_acc = float(
                compute_metrics(predict_many(params, val.samples), val.labels).accuracy
            )
            cell_losses = _score_cells(
                train, network, partition, batch, model, result.incumbent, params
            )
            record = EpochRecord(
                epoch=epoch,
                num_cells=partition.size,
                batch=list(batch),
                objective=float(result.objective),
                train_loss=float(dataset_loss(params, train)),
                val_accuracy=val_acc,
                split_cell=None,
                cells=[list(c) for c in partition.cells],
            )
            if val_acc > best_acc:
                best_params, best_acc, best_epoch = params, val_acc, epoch

            partition, record.split_cell = _split_worst(
                train, partition, cell_losses, rng
            )
            records.append(record)
            if log_fh:
                log_fh.write(record.to_json() + "\n")
                log_fh.flush()
    finally:
        if log_fh:
            log_fh.close()
    return DatasplitResult(
        params=best_params,
        best_val_accuracy=best_acc,
        best_epoch=best_epoch,
        records=records,
    )


def _score_cells(train, network, partition, batch, model, assignment, params):
    """Summed loss per cell: solved output patterns where the batch covered
    the cell, decoded forward losses elsewhere."""
    batch_set = set(batch)
    losses = []
    for g, cell in enumerate(partition.cells):
        if any(i in batch_set for i in cell):
            pattern = np.array(
                [
                    assignment[model.index[("u", g, network.depth, j)]]
                    for j in range(network.num_classes)
                ]
            )
            total = sum(
                empirical_loss(int(train.labels[i]), pattern) for i in cell
            )
        else:
            total = sum(
                empirical_loss(int(train.labels[i]), forward(params, train.samples[i])[0])
                for i in cell
            )
        losses.append(total)
    return losses


def _split_worst(train, partition, cell_losses, rng):
    """Split the worst splittable cell via 2-means; skip degenerate cells."""
    order = sorted(
        range(partition.size),
        key=lambda g: (-cell_losses[g], -len(partition.cells[g]), g),
    )
    for g in order:
        cell = partition.cells[g]
        pts = train.samples[list(cell)]
        if not _splittable(pts):
            continue
        assign, _ = kmeans(pts, 2, seed=int(rng.integers(2**31)))
        left = tuple(cell[i] for i in range(len(cell)) if assign[i] == 0)
        right = tuple(cell[i] for i in range(len(cell)) if assign[i] == 1)
        new_cells = (
            tuple(c for idx, c in enumerate(partition.cells) if idx != g)
            + (left, right)
        )
        return Partition(new_cells), g
    return partition, None
