"""Pure-numpy bounded-variable primal simplex kernel.

This is the fallback implementation of the pivot loop; the compiled
extension in ``_kernel.pyx`` follows the same contract and the same
deterministic pivot rules:

* entering variable: Dantzig (largest eligible |reduced cost|, first index
  on ties), switching to Bland's rule (lowest eligible index) after a run
  of degenerate steps;
* leaving row: minimum ratio, ties broken by the largest pivot magnitude
  under Dantzig and by the lowest basic variable index under Bland;
* a bound flip is taken whenever it is no longer than the best row ratio.

All arrays are mutated in place.  Returns ``(status, pivots)`` with status
0 = optimal, 1 = unbounded, 2 = iteration limit hit.
"""

import numpy as np

DEGENERATE_STEP = 1e-12
RATIO_TIE = 1e-10


def run_simplex(T, xB, basis, at_upper, in_basis, cost, lb, ub,
                tol_cost, tol_pivot, max_iter, bland_after):
    m = T.shape[0]
    pivots = 0
    degenerate_run = 0

    while pivots < max_iter:
        y = cost[basis]
        d = cost - y @ T
        free = (~in_basis.astype(bool)) & (lb < ub)
        eligible = free & np.where(
            at_upper.astype(bool), d > tol_cost, d < -tol_cost
        )
        if not eligible.any():
            return 0, pivots

        use_bland = degenerate_run >= bland_after
        if use_bland:
            q = int(np.argmax(eligible))
        else:
            score = np.where(eligible, np.abs(d), -1.0)
            q = int(np.argmax(score))

        direction = -1.0 if at_upper[q] else 1.0
        col = T[:, q].copy()
        rate = direction * col
        lb_basic = lb[basis]
        ub_basic = ub[basis]
        theta_rows = np.full(m, np.inf)
        pos = rate > tol_pivot
        neg = rate < -tol_pivot
        with np.errstate(invalid="ignore"):
            theta_rows[pos] = (xB[pos] - lb_basic[pos]) / rate[pos]
            theta_rows[neg] = (xB[neg] - ub_basic[neg]) / rate[neg]
        theta_rows = np.maximum(theta_rows, 0.0)
        best_row_theta = theta_rows.min() if m else np.inf
        flip_limit = ub[q] - lb[q]

        if flip_limit <= best_row_theta:
            if np.isinf(flip_limit):
                return 1, pivots
            xB -= direction * flip_limit * col
            at_upper[q] ^= 1
            pivots += 1
            degenerate_run = degenerate_run + 1 if flip_limit <= DEGENERATE_STEP else 0
            continue
        if np.isinf(best_row_theta):
            return 1, pivots

        ties = theta_rows <= best_row_theta + RATIO_TIE
        if use_bland:
            tied_rows = np.flatnonzero(ties)
            r = int(tied_rows[np.argmin(basis[tied_rows])])
        else:
            stability = np.where(ties, np.abs(rate), -1.0)
            r = int(np.argmax(stability))
        theta = theta_rows[r]

        xB -= direction * theta * col
        leaving = basis[r]
        at_upper[leaving] = 0 if rate[r] > 0 else 1
        in_basis[leaving] = 0
        in_basis[q] = 1
        basis[r] = q
        xB[r] = (lb[q] if direction > 0 else ub[q]) + direction * theta

        pivot_value = T[r, q]
        T[r, :] /= pivot_value
        factors = T[:, q].copy()
        factors[r] = 0.0
        T -= np.outer(factors, T[r, :])

        pivots += 1
        degenerate_run = degenerate_run + 1 if theta <= DEGENERATE_STEP else 0

    return 2, pivots
