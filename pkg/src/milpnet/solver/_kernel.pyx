# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled bounded-variable primal simplex kernel.

Mirrors the contract and the deterministic pivot rules of ``_kernel_py``:
Dantzig pricing with a Bland fallback after a run of degenerate steps,
minimum-ratio leaving row with largest-pivot (Dantzig) or lowest-index
(Bland) tie-breaking, and bound flips whenever they are no longer than the
best row ratio.  Mutates all arrays in place and returns (status, pivots).
"""

import numpy as np

from libc.math cimport INFINITY, fabs

DEF DEGENERATE_STEP = 1e-12
DEF RATIO_TIE = 1e-10


def run_simplex(double[:, ::1] T, double[::1] xB, long long[::1] basis,
                unsigned char[::1] at_upper, unsigned char[::1] in_basis,
                double[::1] cost, double[::1] lb, double[::1] ub,
                double tol_cost, double tol_pivot,
                long long max_iter, long long bland_after):
    cdef Py_ssize_t m = T.shape[0]
    cdef Py_ssize_t n = T.shape[1]
    cdef long long pivots = 0
    cdef long long degenerate_run = 0

    cdef Py_ssize_t i, j, q, r, leaving
    cdef double yi, dj, best_score, score
    cdef double direction, rate, theta, best_row_theta, flip_limit
    cdef double pivot_value, factor, bound, enter_val
    cdef bint use_bland, eligible, hit_lower

    cdef double[::1] d = np.empty(max(n, 1))
    cdef double[::1] col = np.empty(max(m, 1))

    while pivots < max_iter:
        # Reduced costs: d = cost - (cost over basis) @ T, accumulated row-wise.
        for j in range(n):
            d[j] = cost[j]
        for i in range(m):
            yi = cost[basis[i]]
            if yi != 0.0:
                for j in range(n):
                    d[j] -= yi * T[i, j]

        use_bland = degenerate_run >= bland_after
        q = -1
        best_score = -1.0
        for j in range(n):
            if in_basis[j] or lb[j] >= ub[j]:
                continue
            dj = d[j]
            if at_upper[j]:
                eligible = dj > tol_cost
            else:
                eligible = dj < -tol_cost
            if not eligible:
                continue
            if use_bland:
                q = j
                break
            score = fabs(dj)
            if score > best_score:
                best_score = score
                q = j
        if q < 0:
            return 0, pivots

        direction = -1.0 if at_upper[q] else 1.0

        best_row_theta = INFINITY
        for i in range(m):
            col[i] = T[i, q]
            rate = direction * col[i]
            if rate > tol_pivot:
                bound = lb[basis[i]]
                theta = INFINITY if bound == -INFINITY else (xB[i] - bound) / rate
            elif rate < -tol_pivot:
                bound = ub[basis[i]]
                theta = INFINITY if bound == INFINITY else (xB[i] - bound) / rate
            else:
                continue
            if theta < 0.0:
                theta = 0.0
            if theta < best_row_theta:
                best_row_theta = theta

        flip_limit = ub[q] - lb[q]
        if flip_limit <= best_row_theta:
            if flip_limit == INFINITY:
                return 1, pivots
            for i in range(m):
                xB[i] -= direction * flip_limit * col[i]
            at_upper[q] ^= 1
            pivots += 1
            degenerate_run = degenerate_run + 1 if flip_limit <= DEGENERATE_STEP else 0
            continue
        if best_row_theta == INFINITY:
            return 1, pivots

        # Leaving row among the ratio ties.
        r = -1
        best_score = -1.0
        for i in range(m):
            rate = direction * col[i]
            if rate > tol_pivot:
                bound = lb[basis[i]]
                theta = INFINITY if bound == -INFINITY else (xB[i] - bound) / rate
            elif rate < -tol_pivot:
                bound = ub[basis[i]]
                theta = INFINITY if bound == INFINITY else (xB[i] - bound) / rate
            else:
                continue
            if theta < 0.0:
                theta = 0.0
            if theta > best_row_theta + RATIO_TIE:
                continue
            if use_bland:
                score = -<double> basis[i]
            else:
                score = fabs(rate)
            if score > best_score:
                best_score = score
                r = i
        if r < 0:
            return 1, pivots

        rate = direction * col[r]
        if rate > tol_pivot:
            theta = (xB[r] - lb[basis[r]]) / rate
        else:
            theta = (xB[r] - ub[basis[r]]) / rate
        if theta < 0.0:
            theta = 0.0
        hit_lower = rate > 0.0

        for i in range(m):
            xB[i] -= direction * theta * col[i]
        leaving = basis[r]
        at_upper[leaving] = 0 if hit_lower else 1
        in_basis[leaving] = 0
        in_basis[q] = 1
        basis[r] = q
        enter_val = (lb[q] if direction > 0.0 else ub[q]) + direction * theta
        xB[r] = enter_val

        pivot_value = T[r, q]
        for j in range(n):
            T[r, j] /= pivot_value
        for i in range(m):
            if i == r:
                continue
            factor = T[i, q]
            if factor != 0.0:
                for j in range(n):
                    T[i, j] -= factor * T[r, j]

        pivots += 1
        degenerate_run = degenerate_run + 1 if theta <= DEGENERATE_STEP else 0

    return 2, pivots
