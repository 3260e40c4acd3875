"""Independent reference implementations used as test oracles.

Everything here is deliberately written against the plainest possible
semantics (python loops, exhaustive enumeration) and stays independent of
the library code paths it is used to check.
"""

import itertools

import numpy as np


def loop_forward(weights, thresholds, x, biases=None):
    """Step-network forward pass with plain Python loops."""
    u = list(x)
    trace = []
    for k, w in enumerate(weights):
        out = []
        for row in range(len(w)):
            acc = 0.0
            for col in range(len(u)):
                acc += w[row][col] * u[col]
            if biases is not None:
                acc += biases[k][row]
            out.append(1 if acc >= thresholds[k] else 0)
        u = out
        trace.append(out)
    return trace


def loop_loss(label, output):
    total = 0.0
    for j, z in enumerate(output):
        total += -z if j == label else z
    return total


def enumerate_ternary_optimum(samples, labels, widths):
    """Exhaustive minimum of the training loss over all ternary weights.

    Zero thresholds, no biases.  Works for one or two layers; vectorized
    over complete weight assignments so instances up to ~3^10 stay fast.
    """
    samples = np.asarray(samples, dtype=float)
    labels = np.asarray(labels, dtype=int)
    vals = (-1.0, 0.0, 1.0)
    if len(widths) == 2:
        n, c = widths
        best = np.inf
        for flat in itertools.product(vals, repeat=n * c):
            w1 = np.array(flat).reshape(c, n)
            z = (samples @ w1.T >= 0).astype(float)
            loss = float(z.sum() - 2.0 * z[np.arange(len(labels)), labels].sum())
            best = min(best, loss)
        return best
    n, d1, c = widths
    w1_list = [
        np.array(flat).reshape(d1, n)
        for flat in itertools.product(vals, repeat=n * d1)
    ]
    u1 = np.stack([(samples @ w1.T >= 0).astype(float) for w1 in w1_list])
    best = np.inf
    for flat in itertools.product(vals, repeat=d1 * c):
        w2 = np.array(flat).reshape(c, d1)
        z = (u1 @ w2.T >= 0).astype(float)  # (assignments, m, c)
        correct = z[:, np.arange(len(labels)), labels].sum(axis=1)
        losses = z.sum(axis=(1, 2)) - 2.0 * correct
        best = min(best, float(losses.min()))
    return best


def lp_vertex_optimum(variables, constraints, objective):
    """Enumerate basic solutions of a small LP with bounded variables.

    ``variables``: list of (lb, ub); ``constraints``: list of
    (coefficients, sense, rhs); ``objective``: dense coefficient list.
    Every vertex of the feasible box-polytope is the solution of n tight
    rows drawn from the constraint rows plus the bound rows.
    """
    n = len(variables)
    rows = []
    for coeffs, sense, rhs in constraints:
        rows.append((np.asarray(coeffs, dtype=float), sense, float(rhs)))
    bound_rows = []
    for j, (lb, ub) in enumerate(variables):
        e = np.zeros(n)
        e[j] = 1.0
        bound_rows.append((e, "=", lb))
        bound_rows.append((e, "=", ub))
    all_rows = [(c, r) for c, _, r in rows] + [(c, r) for c, _, r in bound_rows]

    best = np.inf
    c_obj = np.asarray(objective, dtype=float)
    for combo in itertools.combinations(range(len(all_rows)), n):
        a = np.array([all_rows[i][0] for i in combo])
        b = np.array([all_rows[i][1] for i in combo])
        if abs(np.linalg.det(a)) < 1e-10:
            continue
        x = np.linalg.solve(a, b)
        ok = True
        for j, (lb, ub) in enumerate(variables):
            if x[j] < lb - 1e-8 or x[j] > ub + 1e-8:
                ok = False
                break
        if ok:
            for coeffs, sense, rhs in rows:
                lhs = float(coeffs @ x)
                if sense == "<=" and lhs > rhs + 1e-8:
                    ok = False
                elif sense == ">=" and lhs < rhs - 1e-8:
                    ok = False
                elif sense == "=" and abs(lhs - rhs) > 1e-8:
                    ok = False
                if not ok:
                    break
        if ok:
            best = min(best, float(c_obj @ x))
    return best


def bnb_oracle(model, solve_lp):
    """MILP optimum by enumerating the binary variables, LP on the rest."""
    binary = [i for i, v in enumerate(model.variables) if v.integer]
    best = np.inf
    for bits in itertools.product((0.0, 1.0), repeat=len(binary)):
        overrides = {idx: (b, b) for idx, b in zip(binary, bits)}
        res = solve_lp(model, bound_overrides=overrides)
        if res.status == "optimal":
            best = min(best, res.objective)
    return best
