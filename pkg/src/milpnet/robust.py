"""Uncertainty-set semantics: dual norms, certificates and random attacks.

Robust training forces every first-layer activation to be constant on a
norm ball around each training point.  Because all deeper layers only see
the first layer's 0/1 outputs, first-layer invariance makes the whole
prediction invariant, so certification never needs to look past layer one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from .core import BdnnParams, Dataset, forward, predict


class Norm(Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"


@dataclass(frozen=True)
class UncertaintySpec:
    """Norm ball family: one shared radius or per-point radii."""

    norm: Norm
    radii: Union[float, Sequence[float]]

    def __post_init__(self):
        if np.isscalar(self.radii):
            if self.radii < 0:
                raise ValueError("radius must be nonnegative")
        else:
            arr = np.asarray(self.radii, dtype=float)
            if np.any(arr < 0):
                raise ValueError("radii must be nonnegative")
            object.__setattr__(self, "radii", tuple(float(r) for r in arr))

    def resolve_radii(self, m: int) -> np.ndarray:
        if np.isscalar(self.radii):
            return np.full(m, float(self.radii))
        arr = np.asarray(self.radii, dtype=float)
        if arr.shape[0] != m:
            raise ValueError(f"expected {m} radii, got {arr.shape[0]}")
        return arr


@dataclass(frozen=True)
class AttackConfig:
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("attack level must be nonnegative")


def dual_norm(norm: Norm, w) -> float:
    """Dual of the chosen norm: l1<->linf, l2 self-dual."""
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size == 0:
        return 0.0
    if norm is Norm.L2:
        return float(np.linalg.norm(w))
    if norm is Norm.LINF:
        return float(np.sum(np.abs(w)))
    return float(np.max(np.abs(w)))


def certify_first_layer(params: BdnnParams, x, radius: float, norm: Norm):
    """Per-neuron robustness certificates for one input.

    A neuron is certified when its activation cannot flip anywhere on the
    radius ball: an active neuron needs its margin above threshold even
    against the worst-case decrease, an inactive one needs to stay strictly
    below even against the worst-case increase.  Returns the per-neuron
    booleans and their conjunction; if all neurons are certified the
    prediction is provably constant on the ball.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    w1 = params.weights[0]
    lam = params.thresholds[0]
    pre = w1 @ x
    if params.biases is not None:
        pre = pre + params.biases[0]
    flags = []
    for j in range(w1.shape[0]):
        margin = radius * dual_norm(norm, w1[j])
        if pre[j] >= lam:
            flags.append(pre[j] - margin >= lam)
        else:
            flags.append(pre[j] + margin < lam)
    flags = np.array(flags, dtype=bool)
    return flags, bool(flags.all())


def random_attack(x, config: AttackConfig) -> np.ndarray:
    """Add an independent +/-level sign vector to the input."""
    x = np.asarray(x, dtype=float).reshape(-1)
    rng = np.random.default_rng(config.seed)
    signs = rng.integers(0, 2, size=x.shape[0]) * 2 - 1
    return x + config.level * signs


def robust_eval(
    params: BdnnParams,
    dataset: Dataset,
    attack_levels: Sequence[float],
    repetitions: int = 10,
    seed: int = 0,
) -> list:
    """Mean accuracy under random sign attacks, one row per attack level."""
    rng = np.random.default_rng(seed)
    table = []
    for level in attack_levels:
        accs = []
        for _ in range(repetitions):
            correct = 0
            for x, y in zip(dataset.samples, dataset.labels):
                attacked = random_attack(
                    x, AttackConfig(level=level, seed=int(rng.integers(2**31)))
                )
                if predict(params, attacked) == int(y):
                    correct += 1
            accs.append(correct / dataset.num_samples)
        table.append((float(level), float(np.mean(accs))))
    return table
