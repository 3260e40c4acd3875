"""Branch and bound over the integer variables of a MilpModel.

Node relaxations are solved by the bounded simplex in :mod:`.lp`.  The
search keeps a valid global lower bound at all times, reports the percent
optimality gap, and only accepts incumbents that re-verify against the
original constraints.  Exploration is single-threaded; with a fixed
configuration the node sequence is fully deterministic.
"""

from __future__ import annotations

import heapq
import json
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .lp import LpProblem


class SolverStatus(Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"  # incumbent found, gap above tolerance at a limit
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NO_INCUMBENT = "no_incumbent"  # limit hit before any feasible point


@dataclass(frozen=True)
class SolverConfig:
    time_limit: Optional[float] = None
    gap_tolerance: float = 0.0
    integrality_tolerance: float = 1e-6
    node_selection: str = "best_bound"  # or "depth_first"
    branching: str = "most_fractional"  # or "first_fractional"
    seed: int = 0
    threads: int = 1
    log_path: Optional[str] = None

    def __post_init__(self):
        if self.integrality_tolerance <= 0:
            raise ValueError("integrality_tolerance must be positive")
        if self.gap_tolerance < 0:
            raise ValueError("gap_tolerance must be nonnegative")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.node_selection not in ("best_bound", "depth_first"):
            raise ValueError(f"unknown node selection {self.node_selection!r}")
        if self.branching not in ("most_fractional", "first_fractional"):
            raise ValueError(f"unknown branching rule {self.branching!r}")


@dataclass
class SolveResult:
    status: SolverStatus
    incumbent: Optional[np.ndarray]
    objective: Optional[float]
    best_bound: float
    gap: Optional[float]
    nodes: int
    lp_iterations: int
    wall_time: float
    events: list = field(default_factory=list)


_PRUNE_EPS = 1e-9


def _gap_percent(objective: float, bound: float) -> float:
    return 100.0 * max(objective - bound, 0.0) / max(abs(objective), 1e-10)


class _Search:
    def __init__(self, model, config):
        self.model = model
        self.config = config
        self.problem = LpProblem(model)
        self.int_idx = [i for i, v in enumerate(model.variables) if v.integer]
        self.start = time.perf_counter()
        self.incumbent = None
        self.incumbent_obj = np.inf
        self.nodes = 0
        self.lp_iterations = 0
        self.events = []
        self.reported_bound = -np.inf
        self.unresolved = []  # bounds of nodes fathomed without resolution
        self.open_heap = []  # (bound, -seq, overrides) for best-bound
        self.open_stack = []  # (bound, overrides) for depth-first
        self.seq = 0
        self.log_fh = open(config.log_path, "a") if config.log_path else None

    # -- bookkeeping -----------------------------------------------------

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def out_of_time(self) -> bool:
        limit = self.config.time_limit
        return limit is not None and self.elapsed() >= limit

    def emit(self, kind: str, **payload):
        record = {
            "event": kind,
            "time": round(self.elapsed(), 6),
            "nodes": self.nodes,
            **payload,
        }
        self.events.append(record)
        if self.log_fh:
            self.log_fh.write(json.dumps(record) + "\n")
            self.log_fh.flush()

    def push(self, bound: float, overrides: dict):
        self.seq += 1
        if self.config.node_selection == "best_bound":
            heapq.heappush(self.open_heap, (bound, -self.seq, overrides))
        else:
            self.open_stack.append((bound, overrides))

    def pop(self):
        if self.config.node_selection == "best_bound":
            bound, _, overrides = heapq.heappop(self.open_heap)
            return bound, overrides
        return self.open_stack.pop()

    def have_open(self) -> bool:
        return bool(self.open_heap or self.open_stack)

    def open_bound(self) -> float:
        """Smallest lower bound among open and unresolved nodes."""
        best = np.inf
        if self.open_heap:
            best = min(best, self.open_heap[0][0])
        if self.open_stack:
            best = min(best, min(b for b, _ in self.open_stack))
        if self.unresolved:
            best = min(best, min(self.unresolved))
        return best

    def global_bound(self) -> float:
        return min(self.open_bound(), self.incumbent_obj)

    def maybe_report_bound(self):
        bound = self.global_bound()
        if bound > self.reported_bound + 1e-12 and np.isfinite(bound):
            self.reported_bound = bound
            self.emit("bound", bound=bound)

    # -- incumbent handling ----------------------------------------------

    def try_accept(self, x: np.ndarray, node_bound: float) -> bool:
        tol = self.config.integrality_tolerance
        rounded = x.copy()
        for i in self.int_idx:
            rounded[i] = round(rounded[i])
        candidates = []
        if self.model.refine is not None:
            try:
                candidates.append(self.model.refine(rounded))
            except Exception:
                pass
        candidates.append(rounded)
        best = None
        best_obj = np.inf
        for cand in candidates:
            if any(abs(cand[i] - round(cand[i])) > tol for i in self.int_idx):
                continue
            if self.model.max_violation(cand) > 1e-6:
                continue
            obj = self.model.objective_offset + sum(
                coef * cand[idx] for idx, coef in self.model.objective.items()
            )
            if obj < best_obj:
                best, best_obj = cand, obj
        if best is None:
            # Integral relaxation that fails re-verification: keep its bound
            # so the reported gap stays honest, but drop the node.
            self.unresolved.append(node_bound)
            return False
        if best_obj < self.incumbent_obj - _PRUNE_EPS:
            self.incumbent = best
            self.incumbent_obj = best_obj
            self.emit("incumbent", objective=best_obj, bound=self.reported_bound)
        return True

    # -- main loop ---------------------------------------------------------

    def run(self) -> SolveResult:
        cfg = self.config
        try:
            root = self.problem.solve()
            self.lp_iterations += root.iterations
            self.nodes += 1
            if root.status == "infeasible":
                return self.finish(SolverStatus.INFEASIBLE)
            if root.status == "unbounded":
                return self.finish(SolverStatus.UNBOUNDED)
            self.process(root, {})
            while self.have_open():
                if self.out_of_time():
                    return self.finish(self.limit_status())
                if self.incumbent is not None and self.gap() <= cfg.gap_tolerance:
                    return self.finish(SolverStatus.OPTIMAL)
                bound, overrides = self.pop()
                if bound >= self.incumbent_obj - _PRUNE_EPS:
                    continue
                relax = self.problem.solve(bound_overrides=overrides)
                self.lp_iterations += relax.iterations
                self.nodes += 1
                if relax.status == "infeasible":
                    self.maybe_report_bound()
                    continue
                if relax.status == "unbounded":
                    return self.finish(SolverStatus.UNBOUNDED)
                self.process(relax, overrides, parent_bound=bound)
            # Tree exhausted: the incumbent (if any) is proven optimal unless
            # an unresolved node left a bound strictly below it.
            if self.incumbent is None:
                if self.unresolved:
                    return self.finish(SolverStatus.NO_INCUMBENT)
                return self.finish(SolverStatus.INFEASIBLE)
            if self.open_bound() < self.incumbent_obj - _PRUNE_EPS:
                return self.finish(SolverStatus.FEASIBLE)
            return self.finish(SolverStatus.OPTIMAL)
        finally:
            if self.log_fh:
                self.log_fh.close()

    def process(self, relax, overrides, parent_bound=-np.inf):
        bound = max(relax.objective, parent_bound)
        if bound >= self.incumbent_obj - _PRUNE_EPS:
            self.maybe_report_bound()
            return
        tol = self.config.integrality_tolerance
        fractional = [
            i for i in self.int_idx if abs(relax.x[i] - round(relax.x[i])) > tol
        ]
        if not fractional:
            self.try_accept(relax.x, bound)
            self.maybe_report_bound()
            return
        if self.config.branching == "first_fractional":
            var = fractional[0]
        else:
            # Most fractional: fractional part closest to one half.
            var = min(
                fractional,
                key=lambda i: abs((relax.x[i] - np.floor(relax.x[i])) - 0.5),
            )
        value = relax.x[var]
        lo = float(np.floor(value))
        hi = lo + 1.0
        down = dict(overrides)
        down[var] = (self.model.variables[var].lb, lo)
        up = dict(overrides)
        up[var] = (hi, self.model.variables[var].ub)
        # Push the up branch first so the down branch dives first.
        self.push(bound, up)
        self.push(bound, down)
        self.maybe_report_bound()

    def gap(self) -> Optional[float]:
        if self.incumbent is None:
            return None
        return _gap_percent(self.incumbent_obj, self.global_bound())

    def limit_status(self) -> SolverStatus:
        return (
            SolverStatus.FEASIBLE if self.incumbent is not None else SolverStatus.NO_INCUMBENT
        )

    def finish(self, status: SolverStatus) -> SolveResult:
        if status is SolverStatus.INFEASIBLE:
            bound = np.inf
        elif status is SolverStatus.UNBOUNDED:
            bound = -np.inf
        else:
            bound = self.global_bound()
        objective = None if self.incumbent is None else float(self.incumbent_obj)
        gap = None
        if self.incumbent is not None:
            gap = _gap_percent(self.incumbent_obj, min(bound, self.incumbent_obj))
        result = SolveResult(
            status=status,
            incumbent=self.incumbent,
            objective=objective,
            best_bound=float(bound),
            gap=gap,
            nodes=self.nodes,
            lp_iterations=self.lp_iterations,
            wall_time=self.elapsed(),
            events=self.events,
        )
        self.emit(
            "done",
            status=status.value,
            objective=objective,
            bound=float(bound) if np.isfinite(bound) else None,
            gap=gap,
        )
        return result


def solve(model, config: Optional[SolverConfig] = None) -> SolveResult:
    """Solve a MilpModel to optimality (or to the configured limits)."""
    config = config or SolverConfig()
    if model.cone_notes:
        raise ValueError(
            "model carries quadratic cone terms; the embedded solver is "
            "linear — export it for an external conic solver instead"
        )
    if not model.variables:
        raise ValueError("model has no variables")
    return _Search(model, config).run()
