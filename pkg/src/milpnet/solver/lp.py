"""LP relaxation driver: two-phase bounded simplex over dense tableaus.

The pivot loop itself lives in a kernel module with two interchangeable
implementations: a compiled Cython extension and a pure-numpy fallback.
The extension is picked at import time when available; set the environment
variable ``MILPNET_PURE_KERNEL=1`` to force the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernel_py

if os.environ.get("MILPNET_PURE_KERNEL"):
    _default_kernel = _kernel_py
    HAVE_COMPILED_KERNEL = False
else:
    try:
        from . import _kernel as _compiled_kernel

        _default_kernel = _compiled_kernel
        HAVE_COMPILED_KERNEL = True
    except ImportError:
        _default_kernel = _kernel_py
        HAVE_COMPILED_KERNEL = False


def kernel_name() -> str:
    return "compiled" if _default_kernel is not _kernel_py else "pure-python"


class LpNumericalError(RuntimeError):
    """The simplex failed to terminate cleanly; never a silent wrong answer."""


@dataclass
class LpResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: Optional[np.ndarray]
    objective: Optional[float]
    iterations: int


FEAS_TOL = 1e-7
COST_TOL = 1e-9
PIVOT_TOL = 1e-9
BLAND_AFTER = 60


class LpProblem:
    """Prebuilt dense arrays for one model, reusable across bound changes."""

    def __init__(self, model):
        n = len(model.variables)
        m = len(model.constraints)
        self.n_structural = n
        self.n_rows = m
        lb = np.array([v.lb for v in model.variables], dtype=float)
        ub = np.array([v.ub for v in model.variables], dtype=float)
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            raise ValueError("all model variables must have finite bounds")
        self.base_lb = lb
        self.base_ub = ub
        self.cost = np.zeros(n + m)
        for idx, coef in model.objective.items():
            self.cost[idx] = coef
        self.objective_offset = model.objective_offset
        self.rhs = np.array([c.rhs for c in model.constraints], dtype=float)
        self.senses = [c.sense for c in model.constraints]
        # Structural columns followed by one slack column per row.
        full = np.zeros((m, n + m))
        for i, con in enumerate(model.constraints):
            for idx, coef in con.terms:
                full[i, idx] += coef
            full[i, n + i] = 1.0
        self.a_full = full
        self.slack_lb = np.array(
            [0.0 if s in ("<=", "=") else -np.inf for s in self.senses]
        )
        self.slack_ub = np.array(
            [0.0 if s in (">=", "=") else np.inf for s in self.senses]
        )

    def solve(self, bound_overrides=None, kernel=None) -> LpResult:
        kernel = kernel or _default_kernel
        n, m = self.n_structural, self.n_rows
        lb = self.base_lb.copy()
        ub = self.base_ub.copy()
        if bound_overrides:
            for idx, (lo, hi) in bound_overrides.items():
                lb[idx] = max(lb[idx], lo)
                ub[idx] = min(ub[idx], hi)
        if np.any(lb > ub + 1e-12):
            return LpResult(status="infeasible", x=None, objective=None, iterations=0)
        ub = np.maximum(ub, lb)

        # Start every structural variable at its lower bound, slacks basic.
        x_struct = lb.copy()
        slack_vals = self.rhs - self.a_full[:, :n] @ x_struct
        violation = np.zeros(m)
        over = slack_vals > self.slack_ub
        under = slack_vals < self.slack_lb
        violation[over] = slack_vals[over] - self.slack_ub[over]
        violation[under] = slack_vals[under] - self.slack_lb[under]
        art_rows = np.flatnonzero(np.abs(violation) > FEAS_TOL)
        n_art = art_rows.size

        total = n + m + n_art
        tableau = np.empty((m, total))
        tableau[:, : n + m] = self.a_full
        full_lb = np.concatenate([lb, self.slack_lb, np.zeros(n_art)])
        full_ub = np.concatenate([ub, self.slack_ub, np.full(n_art, np.inf)])
        basis = np.arange(n, n + m, dtype=np.int64)
        xB = slack_vals.copy()
        at_upper = np.zeros(total, dtype=np.uint8)
        in_basis = np.zeros(total, dtype=np.uint8)
        in_basis[n : n + m] = 1

        for a, row in enumerate(art_rows):
            col = n + m + a
            sign = 1.0 if violation[row] > 0 else -1.0
            art = np.zeros(m)
            art[row] = sign
            tableau[:, col] = art
            # Pin the slack at the violated bound; the artificial absorbs
            # the residual with a nonnegative value.
            pinned = self.slack_ub[row] if violation[row] > 0 else self.slack_lb[row]
            in_basis[n + row] = 0
            at_upper[n + row] = 1 if pinned == self.slack_ub[row] else 0
            basis[row] = col
            in_basis[col] = 1
            xB[row] = abs(violation[row])

        max_iter = 20000 + 60 * total

        if n_art:
            phase_cost = np.zeros(total)
            phase_cost[n + m :] = 1.0
            status, it1 = kernel.run_simplex(
                tableau, xB, basis, at_upper, in_basis, phase_cost,
                full_lb, full_ub, COST_TOL, PIVOT_TOL, max_iter, BLAND_AFTER,
            )
            if status == 2:
                raise LpNumericalError("phase-1 simplex hit its iteration limit")
            infeas = float(
                sum(xB[i] for i in range(m) if basis[i] >= n + m)
                + sum(
                    _nonbasic_value(j, at_upper, full_lb, full_ub)
                    for j in range(n + m, total)
                    if not in_basis[j]
                )
            )
            if infeas > FEAS_TOL:
                return LpResult(
                    status="infeasible", x=None, objective=None, iterations=it1
                )
            _drive_out_artificials(
                tableau, xB, basis, at_upper, in_basis, full_lb, full_ub, n + m
            )
            full_lb[n + m :] = 0.0
            full_ub[n + m :] = 0.0
        else:
            it1 = 0

        cost = np.zeros(total)
        cost[: n + m] = self.cost
        status, it2 = kernel.run_simplex(
            tableau, xB, basis, at_upper, in_basis, cost,
            full_lb, full_ub, COST_TOL, PIVOT_TOL, max_iter, BLAND_AFTER,
        )
        iterations = it1 + it2
        if status == 2:
            raise LpNumericalError("phase-2 simplex hit its iteration limit")
        if status == 1:
            return LpResult(
                status="unbounded", x=None, objective=None, iterations=iterations
            )

        x_full = np.where(at_upper.astype(bool), full_ub, full_lb)
        x_full[~np.isfinite(x_full)] = 0.0
        x_full[basis] = xB
        x_full = self._polish(x_full, basis, n, m)
        x = x_full[:n]
        objective = float(self.cost[:n] @ x) + self.objective_offset
        return LpResult(status="optimal", x=x, objective=objective, iterations=iterations)

    def _polish(self, x_full, basis, n, m):
        """Recompute basic values exactly from the original basis columns.

        Dense pivoting accumulates drift; one least-squares solve against
        the untouched columns restores residuals to machine precision.
        Basic artificials (only possible on redundant rows, at value 0)
        are treated as exact zeros.
        """
        nm = n + m
        real = basis < nm
        real_basis = basis[real]
        cols = self.a_full[:, real_basis]
        nonbasic_mask = np.ones(nm, dtype=bool)
        nonbasic_mask[real_basis] = False
        nb_idx = np.flatnonzero(nonbasic_mask)
        rhs = self.rhs - self.a_full[:, nb_idx] @ x_full[nb_idx]
        try:
            solved, *_ = np.linalg.lstsq(cols, rhs, rcond=None)
        except np.linalg.LinAlgError:
            return x_full
        candidate = x_full.copy()
        candidate[real_basis] = solved
        if np.max(np.abs(candidate - x_full), initial=0.0) > 1e-5:
            return x_full  # the clean solve disagrees too much; keep tableau values
        return candidate


def _nonbasic_value(j, at_upper, lb, ub):
    v = ub[j] if at_upper[j] else lb[j]
    return v if np.isfinite(v) else 0.0


def _drive_out_artificials(tableau, xB, basis, at_upper, in_basis, lb, ub, first_art):
    """Pivot zero-valued basic artificials out where a real column allows it."""
    m = tableau.shape[0]
    for row in range(m):
        if basis[row] < first_art:
            continue
        pivot_col = -1
        for j in range(first_art):
            if not in_basis[j] and abs(tableau[row, j]) > 1e-7 and lb[j] < ub[j]:
                pivot_col = j
                break
        if pivot_col < 0:
            continue  # redundant row; the artificial stays pinned at zero
        leaving = basis[row]
        value = ub[pivot_col] if at_upper[pivot_col] else lb[pivot_col]
        in_basis[leaving] = 0
        at_upper[leaving] = 0
        basis[row] = pivot_col
        in_basis[pivot_col] = 1
        xB[row] = value if np.isfinite(value) else 0.0
        piv = tableau[row, pivot_col]
        tableau[row, :] /= piv
        factors = tableau[:, pivot_col].copy()
        factors[row] = 0.0
        tableau -= np.outer(factors, tableau[row, :])


def solve_lp(model, bound_overrides=None, kernel=None) -> LpResult:
    """Solve the LP relaxation of a model (integrality dropped)."""
    return LpProblem(model).solve(bound_overrides=bound_overrides, kernel=kernel)
