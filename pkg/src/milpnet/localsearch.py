"""Alternating local search over odd/even layer fixations.

Each round solves two restricted training problems: one where the
even-layer weights, thresholds and internal activations are pinned to
their current values (leaving the odd layers free), then the mirror
problem with the odd layers pinned.  Because consecutive layers never
have the same parity, every weight-activation product in a restricted
problem has at least one fixed factor, so both subproblems are linear
MILPs.  The output activations always stay free: they carry the loss.

The loop keeps alternating while a full round strictly improves the
objective; the previous solution stays feasible for the next subproblem,
so accepted objectives never increase and the loop terminates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import BdnnParams, Dataset, NetworkSpec, ThresholdMode, WeightDomain, forward
from .model import BuildOptions, MilpModel, ModelBuildError, build_exact, build_fixed
from .solver import SolverConfig, SolverStatus, solve


class LocalSearchError(RuntimeError):
    """No feasible starting fixation found within the retry budget."""


@dataclass(frozen=True)
class FixationState:
    """Pinned values for one parity: 1 = even layers pinned, 2 = odd pinned."""

    parity: int
    values: dict

    def __post_init__(self):
        if self.parity not in (1, 2):
            raise ValueError("parity must be 1 or 2")


@dataclass
class LocalSearchResult:
    params: BdnnParams
    objective: float
    trace: list  # accepted objective values, non-increasing
    rounds: int
    restarts: int


def required_fixation_keys(network: NetworkSpec, m: int, parity: int) -> set:
    """Keys a complete fixation must pin for the given parity."""
    keys = set()
    bias_cols = 1 if network.use_bias else 0
    for k in range(1, network.depth + 1):
        pinned = (k % 2 == 0) if parity == 1 else (k % 2 == 1)
        if not pinned:
            continue
        for row in range(network.widths[k]):
            for col in range(network.widths[k - 1] + bias_cols):
                keys.add(("W", k, row, col))
        if network.threshold_mode is ThresholdMode.LEARNED:
            keys.add(("lambda", k))
        if k != network.depth:  # output activations are never pinned
            for i in range(m):
                for j in range(network.widths[k]):
                    keys.add(("u", i, k, j))
    return keys


def _build_restricted(dataset, network, fixation, parity, epsilon):
    if fixation.parity != parity:
        raise ModelBuildError(
            f"fixation has parity {fixation.parity}, expected {parity}"
        )
    required = required_fixation_keys(network, dataset.num_samples, parity)
    missing = required - set(fixation.values)
    if missing:
        raise ModelBuildError(
            f"fixation incomplete: {len(missing)} keys missing, e.g. {sorted(missing)[0]}"
        )
    values = {key: fixation.values[key] for key in required}
    return build_fixed(dataset, network, BuildOptions(epsilon_strict=epsilon), values)


def build_h1(dataset: Dataset, network: NetworkSpec, fixation: FixationState,
             epsilon: float = 1e-4) -> MilpModel:
    """Restricted problem with odd layers free and even layers pinned."""
    return _build_restricted(dataset, network, fixation, 1, epsilon)


def build_h2(dataset: Dataset, network: NetworkSpec, fixation: FixationState,
             epsilon: float = 1e-4) -> MilpModel:
    """Restricted problem with even layers free and odd layers pinned."""
    if network.depth < 2:
        raise ModelBuildError("a single-layer network has no even layer to free")
    return _build_restricted(dataset, network, fixation, 2, epsilon)


def _draw_params(network: NetworkSpec, rng) -> BdnnParams:
    weights, biases, thresholds = [], [], []
    for k in range(1, network.depth + 1):
        shape = network.weight_shape(k)
        if network.weight_domain is WeightDomain.BOX:
            w = rng.uniform(-1.0, 1.0, size=shape)
            b = rng.uniform(-1.0, 1.0, size=shape[0])
        else:
            w = rng.integers(-1, 2, size=shape).astype(float)
            b = rng.integers(-1, 2, size=shape[0]).astype(float)
        weights.append(w)
        biases.append(b)
        if network.threshold_mode is ThresholdMode.LEARNED:
            thresholds.append(float(rng.uniform(-1.0, 1.0)))
        else:
            thresholds.append(0.0)
    return BdnnParams(
        network=network,
        weights=tuple(weights),
        thresholds=tuple(thresholds),
        biases=tuple(biases) if network.use_bias else None,
    )


def _values_from_params(dataset, network, params) -> dict:
    """Full key/value map: weights, thresholds and internal forward traces."""
    values = {}
    bias_cols = 1 if network.use_bias else 0
    for k in range(1, network.depth + 1):
        d_k, d_prev = network.weight_shape(k)
        for row in range(d_k):
            for col in range(d_prev):
                values[("W", k, row, col)] = float(params.weights[k - 1][row, col])
            if bias_cols:
                values[("W", k, row, d_prev)] = float(params.biases[k - 1][row])
        if network.threshold_mode is ThresholdMode.LEARNED:
            values[("lambda", k)] = float(params.thresholds[k - 1])
    for i in range(dataset.num_samples):
        _, trace = forward(params, dataset.samples[i])
        for k in range(1, network.depth):
            for j in range(network.widths[k]):
                values[("u", i, k, j)] = float(trace[k - 1][j])
    return values


def assignment_to_values(model: MilpModel, assignment) -> dict:
    """Read weights, thresholds and activations back out of a solution."""
    x = np.asarray(assignment, dtype=float)
    values = {}
    plus = {}
    minus = {}
    for key, idx in model.index.items():
        tag = key[0]
        if tag == "W":
            values[key] = float(x[idx])
        elif tag == "W+":
            plus[key[1:]] = round(float(x[idx]))
        elif tag == "W-":
            minus[key[1:]] = round(float(x[idx]))
        elif tag == "lambda":
            values[key] = float(x[idx])
        elif tag == "u":
            values[key] = float(round(float(x[idx])))
    for sub, p in plus.items():
        values[("W",) + sub] = float(p - minus[sub])
    return values


def _params_from_values(network: NetworkSpec, values: dict) -> BdnnParams:
    weights, biases, thresholds = [], [], []
    for k in range(1, network.depth + 1):
        d_k, d_prev = network.weight_shape(k)
        weights.append(
            np.array(
                [
                    [values[("W", k, row, col)] for col in range(d_prev)]
                    for row in range(d_k)
                ]
            )
        )
        if network.use_bias:
            biases.append(
                np.array([values[("W", k, row, d_prev)] for row in range(d_k)])
            )
        if network.threshold_mode is ThresholdMode.LEARNED:
            thresholds.append(float(np.clip(values[("lambda", k)], -1.0, 1.0)))
        else:
            thresholds.append(0.0)
    return BdnnParams(
        network=network,
        weights=tuple(weights),
        thresholds=tuple(thresholds),
        biases=tuple(biases) if network.use_bias else None,
    )


def local_search(
    dataset: Dataset,
    network: NetworkSpec,
    seed: int = 0,
    max_rounds: int = 100,
    retries: int = 10,
    improve_tol: float = 1e-9,
    epsilon: float = 1e-4,
    solver_config: Optional[SolverConfig] = None,
) -> LocalSearchResult:
    """Run the alternating heuristic from a seeded random initialization."""
    config = solver_config or SolverConfig()
    rng = np.random.default_rng(seed)

    if network.depth == 1:
        model = build_exact(dataset, network, BuildOptions(epsilon_strict=epsilon))
        res = solve(model, config)
        if res.incumbent is None:
            raise LocalSearchError(f"exact subproblem ended with {res.status.value}")
        return LocalSearchResult(
            params=model.decode(res.incumbent),
            objective=float(res.objective),
            trace=[float(res.objective)],
            rounds=1,
            restarts=0,
        )

    restarts = 0
    while True:
        params = _draw_params(network, rng)
        values = _values_from_params(dataset, network, params)
        fix1 = FixationState(1, values)
        model1 = build_h1(dataset, network, fix1, epsilon)
        res1 = solve(model1, config)
        if res1.incumbent is not None:
            break
        restarts += 1
        if restarts >= retries:
            raise LocalSearchError(
                f"no feasible starting fixation in {retries} attempts"
            )

    best_obj = float(res1.objective)
    trace = [best_obj]
    values.update(assignment_to_values(model1, res1.incumbent))
    best_values = dict(values)
    rounds = 0

    while rounds < max_rounds:
        rounds += 1
        round_start = best_obj

        fix2 = FixationState(2, values)
        model2 = build_h2(dataset, network, fix2, epsilon)
        res2 = solve(model2, config)
        if res2.incumbent is None:
            break
        values.update(assignment_to_values(model2, res2.incumbent))
        if res2.objective < best_obj - improve_tol:
            best_obj = float(res2.objective)
            trace.append(best_obj)
            best_values = dict(values)

        fix1 = FixationState(1, values)
        model1 = build_h1(dataset, network, fix1, epsilon)
        res1 = solve(model1, config)
        if res1.incumbent is None:
            break
        values.update(assignment_to_values(model1, res1.incumbent))
        if res1.objective < best_obj - improve_tol:
            best_obj = float(res1.objective)
            trace.append(best_obj)
            best_values = dict(values)

        if round_start - best_obj < improve_tol:
            break

    return LocalSearchResult(
        params=_params_from_values(network, best_values),
        objective=best_obj,
        trace=trace,
        rounds=rounds,
        restarts=restarts,
    )
