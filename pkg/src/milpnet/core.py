"""Domain types and binarized inference: step activations, loss, metrics.

A network here is a stack of K weight matrices with a hard 0/1 step
activation after every layer, including the last one.  Weights live either
in the box [-1, 1] or in the ternary set {-1, 0, 1}; each layer has a
scalar activation threshold that is learned or pinned to zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np


class WeightDomain(Enum):
    BOX = "box"
    TERNARY = "ternary"


class ThresholdMode(Enum):
    LEARNED = "learned"
    FIXED_ZERO = "fixed_zero"


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: widths d_0..d_K plus weight/threshold modes."""

    widths: tuple
    weight_domain: WeightDomain = WeightDomain.BOX
    use_bias: bool = False
    threshold_mode: ThresholdMode = ThresholdMode.LEARNED

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(w < 1 for w in self.widths):
            raise ValueError("all layer widths must be >= 1")
        if self.widths[-1] < 2:
            raise ValueError("classification needs at least 2 output units")

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def num_classes(self) -> int:
        return self.widths[-1]

    def weight_shape(self, k: int) -> tuple:
        """Shape of the layer-k weight matrix (1-based layer index)."""
        return (self.widths[k], self.widths[k - 1])


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BdnnParams:
    """Trained parameters: per-layer weights, thresholds and optional biases."""

    network: NetworkSpec
    weights: tuple
    thresholds: tuple
    biases: Optional[tuple] = None

    def __post_init__(self):
        net = self.network
        ws = tuple(_frozen(w) for w in self.weights)
        if len(ws) != net.depth:
            raise ValueError(f"expected {net.depth} weight matrices, got {len(ws)}")
        for k, w in enumerate(ws, start=1):
            if w.shape != net.weight_shape(k):
                raise ValueError(
                    f"layer {k} weights have shape {w.shape}, "
                    f"expected {net.weight_shape(k)}"
                )
            _check_domain(w, net.weight_domain, f"layer {k} weights")
        ls = tuple(float(v) for v in self.thresholds)
        if len(ls) != net.depth:
            raise ValueError(f"expected {net.depth} thresholds, got {len(ls)}")
        if any(abs(v) > 1 + 1e-12 for v in ls):
            raise ValueError("thresholds must lie in [-1, 1]")
        if net.threshold_mode is ThresholdMode.FIXED_ZERO and any(v != 0.0 for v in ls):
            raise ValueError("thresholds must all be 0 in fixed-zero mode")
        bs = self.biases
        if net.use_bias:
            if bs is None:
                raise ValueError("network uses biases but none were given")
            bs = tuple(_frozen(b) for b in bs)
            for k, b in enumerate(bs, start=1):
                if b.shape != (net.widths[k],):
                    raise ValueError(f"layer {k} bias has shape {b.shape}")
                _check_domain(b, net.weight_domain, f"layer {k} bias")
        elif bs is not None:
            raise ValueError("biases given but network does not use them")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "thresholds", ls)
        object.__setattr__(self, "biases", bs)

    def to_json(self) -> str:
        net = self.network
        payload = {
            "format": "milpnet-params-v1",
            "widths": list(net.widths),
            "weight_domain": net.weight_domain.value,
            "use_bias": net.use_bias,
            "threshold_mode": net.threshold_mode.value,
            "weights": [w.tolist() for w in self.weights],
            "thresholds": list(self.thresholds),
            "biases": [b.tolist() for b in self.biases] if self.biases else None,
        }
        return json.dumps(payload, indent=2)

    @staticmethod
    def from_json(text: str) -> "BdnnParams":
        payload = json.loads(text)
        if payload.get("format") != "milpnet-params-v1":
            raise ValueError("unrecognized parameter file format")
        net = NetworkSpec(
            widths=tuple(payload["widths"]),
            weight_domain=WeightDomain(payload["weight_domain"]),
            use_bias=bool(payload["use_bias"]),
            threshold_mode=ThresholdMode(payload["threshold_mode"]),
        )
        biases = payload.get("biases")
        return BdnnParams(
            network=net,
            weights=tuple(np.array(w, dtype=float) for w in payload["weights"]),
            thresholds=tuple(payload["thresholds"]),
            biases=tuple(np.array(b, dtype=float) for b in biases) if biases else None,
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @staticmethod
    def load(path) -> "BdnnParams":
        with open(path, encoding="utf-8") as fh:
            return BdnnParams.from_json(fh.read())


def _check_domain(arr: np.ndarray, domain: WeightDomain, what: str) -> None:
    if domain is WeightDomain.BOX:
        if np.any(np.abs(arr) > 1 + 1e-12):
            raise ValueError(f"{what} outside [-1, 1]")
    else:
        if not np.all(np.isin(arr, (-1.0, 0.0, 1.0))):
            raise ValueError(f"{what} outside {{-1, 0, 1}}")


@dataclass(frozen=True)
class Dataset:
    """Sample matrix, integer labels and the recomputed Euclidean norm bound."""

    samples: np.ndarray
    labels: np.ndarray
    norm_bound: float = field(init=False)

    def __post_init__(self):
        x = np.atleast_2d(np.array(self.samples, dtype=float))
        y = np.array(self.labels, dtype=int)
        if x.ndim != 2:
            raise ValueError("samples must be a 2-D matrix")
        if x.shape[0] != y.shape[0]:
            raise ValueError("samples and labels disagree on the number of rows")
        if x.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        if np.any(y < 0):
            raise ValueError("labels must be nonnegative class indices")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "labels", y)
        # Never trust a stored bound; derive it from the rows we actually hold.
        object.__setattr__(
            self, "norm_bound", float(np.max(np.linalg.norm(x, axis=1)))
        )

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_features(self) -> int:
        return self.samples.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.samples[idx], self.labels[idx])


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def binary_step(alpha: float, threshold: float) -> int:
    """Hard step: 0 below the threshold, 1 at or above it."""
    return 0 if alpha < threshold else 1


def forward(params: BdnnParams, x) -> tuple:
    """Run one input through the network.

    Returns ``(output_bits, trace)`` where ``trace`` is the list of
    activation vectors u^1..u^K (0/1 int arrays) and ``output_bits`` is an
    alias of the last entry.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    net = params.network
    if x.shape[0] != net.input_dim:
        raise ValueError(
            f"input has dimension {x.shape[0]}, network expects {net.input_dim}"
        )
    trace = []
    u = x
    for k in range(net.depth):
        pre = params.weights[k] @ u
        if params.biases is not None:
            pre = pre + params.biases[k]
        u = (pre >= params.thresholds[k]).astype(int)
        trace.append(u)
    return trace[-1], trace


def predict(params: BdnnParams, x) -> int:
    """Class index of the largest output bit; ties go to the lowest index."""
    out, _ = forward(params, x)
    return int(np.argmax(out))


def predict_many(params: BdnnParams, samples) -> np.ndarray:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    return np.array([predict(params, row) for row in samples], dtype=int)


def empirical_loss(label: int, output) -> float:
    """Misclassification surrogate: sum of wrong-class outputs minus the true one.

    For two classes this is the signed difference of the two output units,
    so over 0/1 outputs it takes values in {-1, 0, 1} with -1 exactly at the
    one-hot vector of the true class.
    """
    z = np.asarray(output, dtype=float).reshape(-1)
    if not 0 <= label < z.shape[0]:
        raise ValueError(f"label {label} out of range for {z.shape[0]} outputs")
    return float(z.sum() - 2.0 * z[label])


def dataset_loss(params: BdnnParams, dataset: Dataset) -> float:
    """Total empirical loss of the decoded network over a dataset."""
    total = 0.0
    for x, y in zip(dataset.samples, dataset.labels):
        out, _ = forward(params, x)
        total += empirical_loss(int(y), out)
    return total


def compute_metrics(predictions: Sequence[int], labels: Sequence[int]) -> Metrics:
    """Accuracy plus macro-averaged precision/recall/F1.

    Classes that appear in neither the predictions nor the labels are left
    out of the macro average.  A zero-denominator precision or recall counts
    as 0, as does F1 when precision + recall is 0.
    """
    pred = np.asarray(predictions, dtype=int)
    true = np.asarray(labels, dtype=int)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError("predictions and labels must be equal-length vectors")
    if pred.shape[0] == 0:
        raise ValueError("cannot score an empty prediction list")
    accuracy = float(np.mean(pred == true))
    classes = np.union1d(pred, true)
    precisions, recalls, f1s = [], [], []
    for c in classes:
        tp = int(np.sum((pred == c) & (true == c)))
        fp = int(np.sum((pred == c) & (true != c)))
        fn = int(np.sum((pred != c) & (true == c)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        precisions.append(p)
        recalls.append(r)
        f1s.append(f)
    return Metrics(
        accuracy=accuracy,
        precision=float(np.mean(precisions)),
        recall=float(np.mean(recalls)),
        f1=float(np.mean(f1s)),
    )
