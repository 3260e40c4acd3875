"""Compile a training instance into a mixed-integer linear program.

The same builder produces four flavours of model:

* the exact formulation (per-point activation variables, products of
  weights and activations replaced by linearization variables with four
  envelope inequalities each),
* the partitioned variant (one activation block per partition cell, with
  first-layer rows and loss terms restricted to a batch),
* the robust variant (first-layer rows carry a dual-norm margin so the
  activations survive any perturbation inside the per-point norm ball),
* restricted subproblems where a caller-supplied set of weights,
  thresholds and activations is substituted as constants (used by the
  alternating local search).

Strict inequalities are relaxed by subtracting a small epsilon from the
right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    BdnnParams,
    Dataset,
    NetworkSpec,
    ThresholdMode,
    WeightDomain,
)
from .robust import Norm, UncertaintySpec


class ModelBuildError(ValueError):
    """Inconsistent dimensions, bad partitions or batches."""


class UnsupportedNormError(ModelBuildError):
    """Raised when a robust norm needs a conic backend the target lacks."""


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float
    ub: float
    integer: bool


@dataclass(frozen=True)
class Constraint:
    terms: tuple  # ((var_index, coefficient), ...)
    sense: str  # "<=", ">=" or "="
    rhs: float


@dataclass(frozen=True)
class BuildOptions:
    epsilon_strict: float = 1e-4
    partition: Optional[tuple] = None
    batch: Optional[tuple] = None
    robust: Optional[UncertaintySpec] = None

    def __post_init__(self):
        if self.epsilon_strict <= 0:
            raise ValueError("epsilon_strict must be positive")
        if self.partition is not None:
            cells = tuple(tuple(int(i) for i in cell) for cell in self.partition)
            seen = set()
            for cell in cells:
                if not cell:
                    raise ValueError("partition cells must be nonempty")
                for i in cell:
                    if i in seen:
                        raise ValueError("partition cells must be disjoint")
                    seen.add(i)
            object.__setattr__(self, "partition", cells)
        if self.batch is not None:
            batch = tuple(int(i) for i in self.batch)
            if len(set(batch)) != len(batch):
                raise ValueError("batch indices must be distinct")
            object.__setattr__(self, "batch", batch)


@dataclass
class MilpModel:
    """Variables, sparse linear constraints and a linear objective (min)."""

    variables: list
    constraints: list
    objective: dict  # var index -> coefficient
    objective_offset: float
    index: dict  # structured key -> var index
    cone_notes: list = field(default_factory=list)
    refine: Optional[Callable] = None
    decode: Optional[Callable] = None

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    def binary_indices(self) -> list:
        return [
            i
            for i, v in enumerate(self.variables)
            if v.integer and v.lb == 0.0 and v.ub == 1.0
        ]

    def num_binary(self) -> int:
        return len(self.binary_indices())

    def keys_with_tag(self, tag: str) -> list:
        return [k for k in self.index if k[0] == tag]

    def max_violation(self, assignment) -> float:
        """Largest constraint/bound violation of a full assignment."""
        x = np.asarray(assignment, dtype=float)
        if x.shape[0] != len(self.variables):
            raise ValueError("assignment does not cover all variables")
        worst = 0.0
        for i, v in enumerate(self.variables):
            worst = max(worst, v.lb - x[i], x[i] - v.ub)
        for con in self.constraints:
            lhs = sum(coef * x[idx] for idx, coef in con.terms)
            if con.sense == "<=":
                worst = max(worst, lhs - con.rhs)
            elif con.sense == ">=":
                worst = max(worst, con.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - con.rhs))
        return worst


def big_m_first_layer(n: int, r: float) -> float:
    """Deactivation constant for first-layer rows: n*r + 1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if r < 0:
        raise ValueError("r must be nonnegative")
    return n * r + 1.0


def big_m_layer(d_prev: int) -> float:
    """Deactivation constant for deeper rows: previous width + 1."""
    if d_prev < 1:
        raise ValueError("d_prev must be >= 1")
    return d_prev + 1.0


def objective_value(model: MilpModel, assignment) -> float:
    x = np.asarray(assignment, dtype=float)
    if x.shape[0] != len(model.variables):
        raise ValueError("assignment does not cover all variables")
    return model.objective_offset + sum(
        coef * x[idx] for idx, coef in model.objective.items()
    )


class _Builder:
    def __init__(self, dataset, network, options, fixed, allow_cone_notes):
        if dataset.num_features != network.input_dim:
            raise ModelBuildError(
                f"dataset has {dataset.num_features} features, "
                f"network expects {network.input_dim}"
            )
        if dataset.num_classes > network.num_classes:
            raise ModelBuildError(
                f"dataset has {dataset.num_classes} classes, "
                f"network outputs {network.num_classes}"
            )
        self.data = dataset
        self.net = network
        self.opts = options
        self.fixed = dict(fixed or {})
        self.allow_cone_notes = allow_cone_notes

        m = dataset.num_samples
        if options.partition is None:
            self.cells = tuple((i,) for i in range(m))
        else:
            for cell in options.partition:
                for i in cell:
                    if not 0 <= i < m:
                        raise ModelBuildError(f"partition index {i} out of range")
            self.cells = options.partition
        covered = {i for cell in self.cells for i in cell}
        if options.batch is None:
            self.batch = tuple(sorted(covered))
        else:
            for i in options.batch:
                if not 0 <= i < m:
                    raise ModelBuildError(f"batch index {i} out of range")
                if i not in covered:
                    raise ModelBuildError(f"batch index {i} not covered by partition")
            self.batch = tuple(sorted(options.batch))
        self.cell_of = {}
        for g, cell in enumerate(self.cells):
            for i in cell:
                self.cell_of[i] = g

        self.robust = options.robust
        if self.robust is not None:
            self.radii = self.robust.resolve_radii(m)
        else:
            self.radii = None

        self.variables = []
        self.constraints = []
        self.index = {}
        self.objective = {}
        self.cone_notes = []

    # -- variable bookkeeping -------------------------------------------------

    def new_var(self, key, name, lb, ub, integer):
        idx = len(self.variables)
        self.variables.append(Variable(name=name, lb=lb, ub=ub, integer=integer))
        self.index[key] = idx
        return idx

    def weight_ref(self, k, row, col):
        """Value of one weight entry: (terms, constant)."""
        key = ("W", k, row, col)
        if key in self.fixed:
            return (), float(self.fixed[key])
        if self.net.weight_domain is WeightDomain.BOX:
            return ((self.index[key], 1.0),), 0.0
        wp = self.index[("W+", k, row, col)]
        wm = self.index[("W-", k, row, col)]
        return ((wp, 1.0), (wm, -1.0)), 0.0

    def u_ref(self, g, k, j):
        key = ("u", g, k, j)
        if key in self.fixed:
            return None, float(self.fixed[key])
        return self.index[key], None

    def lambda_ref(self, k):
        if self.net.threshold_mode is ThresholdMode.FIXED_ZERO:
            return None, 0.0
        key = ("lambda", k)
        if key in self.fixed:
            return None, float(self.fixed[key])
        return self.index[key], None

    def prev_width(self, k):
        """Number of weight columns feeding layer k (bias column included)."""
        return self.net.widths[k - 1] + (1 if self.net.use_bias else 0)

    # -- construction ---------------------------------------------------------

    def create_variables(self):
        net = self.net
        for k in range(1, net.depth + 1):
            for row in range(net.widths[k]):
                for col in range(self.prev_width(k)):
                    key = ("W", k, row, col)
                    if key in self.fixed:
                        continue
                    if net.weight_domain is WeightDomain.BOX:
                        self.new_var(key, f"W_{k}_{row}_{col}", -1.0, 1.0, False)
                    else:
                        wp = self.new_var(
                            ("W+", k, row, col), f"Wp_{k}_{row}_{col}", 0.0, 1.0, True
                        )
                        wm = self.new_var(
                            ("W-", k, row, col), f"Wm_{k}_{row}_{col}", 0.0, 1.0, True
                        )
                        self.add_row(((wp, 1.0), (wm, 1.0)), "<=", 1.0)
        if net.threshold_mode is ThresholdMode.LEARNED:
            for k in range(1, net.depth + 1):
                key = ("lambda", k)
                if key not in self.fixed:
                    self.new_var(key, f"lam_{k}", -1.0, 1.0, False)
        if self.robust is not None and np.any(self.radii > 0):
            self.create_margin_variables()
        for g in range(len(self.cells)):
            for k in range(1, net.depth + 1):
                for j in range(net.widths[k]):
                    key = ("u", g, k, j)
                    if key not in self.fixed:
                        self.new_var(key, f"u_{g}_{k}_{j}", 0.0, 1.0, True)
        for g in range(len(self.cells)):
            for k in range(2, net.depth + 1):
                for row in range(net.widths[k]):
                    for col in range(net.widths[k - 1]):
                        if ("W", k, row, col) in self.fixed:
                            continue
                        if ("u", g, k - 1, col) in self.fixed:
                            continue
                        self.new_var(
                            ("s", g, k, row, col),
                            f"s_{g}_{k}_{row}_{col}",
                            -1.0,
                            1.0,
                            False,
                        )

    def create_margin_variables(self):
        net = self.net
        n = self.data.num_features
        norm = self.robust.norm
        if norm is Norm.L2:
            if not self.allow_cone_notes:
                raise UnsupportedNormError(
                    "the L2 uncertainty ball needs quadratic cone constraints; "
                    "the embedded solver is linear — export the model with "
                    "cmd_export and hand it to a conic solver"
                )
            return
        if norm is Norm.LINF:  # dual norm is l1: one |w| proxy per entry
            for j in range(net.widths[1]):
                for l in range(n):
                    t = self.new_var(("wabs", j, l), f"wabs_{j}_{l}", 0.0, 1.0, False)
                    terms, const = self.weight_ref(1, j, l)
                    self.add_row(((t, 1.0),) + _negate(terms), ">=", const)
                    self.add_row(((t, 1.0),) + terms, ">=", -const)
        else:  # primal l1, dual linf: one row-max proxy per neuron
            for j in range(net.widths[1]):
                t = self.new_var(("wmax", j), f"wmax_{j}", 0.0, 1.0, False)
                for l in range(n):
                    terms, const = self.weight_ref(1, j, l)
                    self.add_row(((t, 1.0),) + _negate(terms), ">=", const)
                    self.add_row(((t, 1.0),) + terms, ">=", -const)

    def margin_terms(self, i, j):
        """Margin r_i * dual_norm(w_j) for point i, first-layer neuron j."""
        if self.robust is None:
            return (), 0.0
        r_i = float(self.radii[i])
        if r_i == 0.0:
            return (), 0.0
        n = self.data.num_features
        norm = self.robust.norm
        if norm is Norm.L2:
            self.cone_notes.append(
                f"row for point {i}, neuron {j}: add {r_i} * ||W[1][{j}][:]||_2"
            )
            return (), 0.0
        if norm is Norm.LINF:
            return tuple(
                (self.index[("wabs", j, l)], r_i) for l in range(n)
            ), 0.0
        return ((self.index[("wmax", j)], r_i),), 0.0

    def add_row(self, terms, sense, rhs):
        terms = tuple((idx, coef) for idx, coef in terms if coef != 0.0)
        if not terms:
            # Fully substituted rows: drop when trivially true, keep an empty
            # (infeasible) row otherwise so the solver reports it.
            if sense == "<=" and 0.0 <= rhs + 1e-12:
                return
            if sense == ">=" and 0.0 >= rhs - 1e-12:
                return
            if sense == "=" and abs(rhs) <= 1e-12:
                return
        self.constraints.append(Constraint(terms=terms, sense=sense, rhs=rhs))

    def emit_layer_rows(self, lhs_terms, lhs_const, big_m, g, k, j, margin_up=(), margin_dn=()):
        """The two activation rows: lhs < M*u + lambda and lhs >= M*(u-1) + lambda."""
        eps = self.opts.epsilon_strict
        u_idx, u_const = self.u_ref(g, k, j)
        lam_idx, lam_const = self.lambda_ref(k)

        def assemble(extra, sense, base_rhs):
            terms = dict()
            for idx, coef in lhs_terms + extra:
                terms[idx] = terms.get(idx, 0.0) + coef
            rhs = base_rhs - lhs_const
            if u_idx is not None:
                terms[u_idx] = terms.get(u_idx, 0.0) - big_m
            else:
                rhs += big_m * u_const
            if lam_idx is not None:
                terms[lam_idx] = terms.get(lam_idx, 0.0) - 1.0
            else:
                rhs += lam_const
            self.add_row(tuple(terms.items()), sense, rhs)

        assemble(margin_up, "<=", -eps)
        assemble(_negate(margin_dn), ">=", -big_m)

    def build(self) -> MilpModel:
        self.create_variables()
        net = self.net
        data = self.data
        n = data.num_features
        bias_extra = 1.0 if net.use_bias else 0.0

        # First layer: one row pair per batch point, tied to its cell's block.
        base_m1 = big_m_first_layer(n, data.norm_bound)
        for i in self.batch:
            g = self.cell_of[i]
            x = data.samples[i]
            if self.radii is not None and self.radii[i] > 0:
                m1 = max(base_m1, n * (data.norm_bound + float(self.radii[i])) + 1.0)
            else:
                m1 = base_m1
            m1 += bias_extra
            for j in range(net.widths[1]):
                terms = {}
                const = 0.0
                for l in range(n):
                    w_terms, w_const = self.weight_ref(1, j, l)
                    for idx, coef in w_terms:
                        terms[idx] = terms.get(idx, 0.0) + coef * x[l]
                    const += w_const * x[l]
                if net.use_bias:
                    w_terms, w_const = self.weight_ref(1, j, n)
                    for idx, coef in w_terms:
                        terms[idx] = terms.get(idx, 0.0) + coef
                    const += w_const
                margin, _ = self.margin_terms(i, j)
                self.emit_layer_rows(
                    tuple(terms.items()), const, m1, g, 1, j,
                    margin_up=margin, margin_dn=margin,
                )

        # Deeper layers: per cell, products via linearization variables.
        for g in range(len(self.cells)):
            for k in range(2, net.depth + 1):
                d_prev = net.widths[k - 1]
                m_k = big_m_layer(d_prev) + bias_extra
                mccormick = []
                for row in range(net.widths[k]):
                    terms = {}
                    const = 0.0
                    for col in range(d_prev):
                        w_terms, w_const = self.weight_ref(k, row, col)
                        u_idx, u_const = self.u_ref(g, k - 1, col)
                        if w_terms and u_idx is not None:
                            s_idx = self.index[("s", g, k, row, col)]
                            terms[s_idx] = terms.get(s_idx, 0.0) + 1.0
                            mccormick.append((s_idx, w_terms, u_idx))
                        elif w_terms:  # fixed activation, free weight
                            if u_const != 0.0:
                                for idx, coef in w_terms:
                                    terms[idx] = terms.get(idx, 0.0) + coef * u_const
                        elif u_idx is not None:  # fixed weight, free activation
                            if w_const != 0.0:
                                terms[u_idx] = terms.get(u_idx, 0.0) + w_const
                        else:
                            const += w_const * u_const
                    if net.use_bias:
                        w_terms, w_const = self.weight_ref(k, row, d_prev)
                        for idx, coef in w_terms:
                            terms[idx] = terms.get(idx, 0.0) + coef
                        const += w_const
                    self.emit_layer_rows(tuple(terms.items()), const, m_k, g, k, row)
                for s_idx, w_terms, u_idx in mccormick:
                    self.add_row(((s_idx, 1.0), (u_idx, -1.0)), "<=", 0.0)
                    self.add_row(((s_idx, 1.0), (u_idx, 1.0)), ">=", 0.0)
                    self.add_row(
                        ((s_idx, 1.0),) + _negate(w_terms) + ((u_idx, 1.0),), "<=", 1.0
                    )
                    self.add_row(
                        ((s_idx, 1.0),) + _negate(w_terms) + ((u_idx, -1.0),), ">=", -1.0
                    )

        # Loss: one linear term per batch point and output unit.
        for i in self.batch:
            g = self.cell_of[i]
            y = int(data.labels[i])
            for j in range(net.num_classes):
                key = ("u", g, net.depth, j)
                if key in self.fixed:
                    raise ModelBuildError("output activations must stay free")
                idx = self.index[key]
                self.objective[idx] = self.objective.get(idx, 0.0) + (
                    -1.0 if j == y else 1.0
                )

        model = MilpModel(
            variables=self.variables,
            constraints=self.constraints,
            objective=self.objective,
            objective_offset=0.0,
            index=self.index,
            cone_notes=self.cone_notes,
        )
        _attach_decoders(model, self)
        return model


def _negate(terms):
    return tuple((idx, -coef) for idx, coef in terms)


def _attach_decoders(model: MilpModel, builder: _Builder):
    net = builder.net
    fixed = builder.fixed
    index = model.index
    samples = builder.data.samples
    cells = builder.cells
    batch = set(builder.batch)
    first_member = []
    for cell in cells:
        members = [i for i in cell if i in batch]
        first_member.append(members[0] if members else None)

    def weight_value(x, k, row, col):
        key = ("W", k, row, col)
        if key in fixed:
            return float(fixed[key])
        if net.weight_domain is WeightDomain.BOX:
            return float(np.clip(x[index[key]], -1.0, 1.0))
        wp = round(float(x[index[("W+", k, row, col)]]))
        wm = round(float(x[index[("W-", k, row, col)]]))
        return float(wp - wm)

    def decode(assignment) -> BdnnParams:
        x = np.asarray(assignment, dtype=float)
        weights, biases, thresholds = [], [], []
        for k in range(1, net.depth + 1):
            d_k, d_prev = net.weight_shape(k)
            w = np.array(
                [
                    [weight_value(x, k, row, col) for col in range(d_prev)]
                    for row in range(d_k)
                ]
            )
            weights.append(w)
            if net.use_bias:
                biases.append(
                    np.array([weight_value(x, k, row, d_prev) for row in range(d_k)])
                )
            if net.threshold_mode is ThresholdMode.FIXED_ZERO:
                thresholds.append(0.0)
            else:
                key = ("lambda", k)
                raw = fixed[key] if key in fixed else x[index[key]]
                thresholds.append(float(np.clip(raw, -1.0, 1.0)))
        return BdnnParams(
            network=net,
            weights=tuple(weights),
            thresholds=tuple(thresholds),
            biases=tuple(biases) if net.use_bias else None,
        )

    def constrained_trace(params, g):
        """Layer-by-layer activations honouring any fixed activation values."""
        i = first_member[g]
        u_prev = samples[i]
        trace = []
        for k in range(1, net.depth + 1):
            pre = params.weights[k - 1] @ u_prev
            if params.biases is not None:
                pre = pre + params.biases[k - 1]
            u = (pre >= params.thresholds[k - 1]).astype(float)
            for j in range(net.widths[k]):
                key = ("u", g, k, j)
                if key in fixed:
                    u[j] = float(fixed[key])
            trace.append(u)
            u_prev = u
        return trace

    def refine(assignment):
        """Rebuild dependent values (activations, products, norm proxies)
        from the decoded weights so incumbents replay bit-exactly."""
        x = np.asarray(assignment, dtype=float).copy()
        params = decode(x)
        if net.weight_domain is WeightDomain.TERNARY:
            for key, idx in index.items():
                if key[0] in ("W+", "W-"):
                    x[idx] = round(float(x[idx]))
        for g in range(len(cells)):
            if first_member[g] is None:
                for key, idx in index.items():
                    if key[0] == "u" and key[1] == g:
                        x[idx] = round(float(x[idx]))
                continue
            trace = constrained_trace(params, g)
            for k in range(1, net.depth + 1):
                for j in range(net.widths[k]):
                    key = ("u", g, k, j)
                    if key in index:
                        x[index[key]] = trace[k - 1][j]
        for key, idx in index.items():
            tag = key[0]
            if tag == "s":
                _, g, k, row, col = key
                w = weight_value(x, k, row, col)
                u_key = ("u", g, k - 1, col)
                u_val = fixed.get(u_key)
                if u_val is None:
                    u_val = x[index[u_key]]
                x[idx] = w * float(u_val)
            elif tag == "wabs":
                _, j, l = key
                x[idx] = abs(weight_value(x, 1, j, l))
            elif tag == "wmax":
                (_, j) = key
                x[idx] = max(
                    abs(weight_value(x, 1, j, l)) for l in range(samples.shape[1])
                )
        return x

    model.decode = decode
    model.refine = refine


def build_exact(dataset: Dataset, network: NetworkSpec, options: Optional[BuildOptions] = None) -> MilpModel:
    """Exact formulation: every training point gets its own activation block."""
    options = options or BuildOptions()
    if options.partition is not None:
        raise ModelBuildError("build_exact does not accept a partition")
    if options.robust is not None:
        raise ModelBuildError("use build_robust for uncertainty-aware models")
    return _Builder(dataset, network, options, None, False).build()


def build_partitioned(dataset: Dataset, network: NetworkSpec, options: BuildOptions) -> MilpModel:
    """Partitioned formulation: points in one cell share an activation block."""
    if options.partition is None:
        raise ModelBuildError("build_partitioned needs options.partition")
    return _Builder(dataset, network, options, None, False).build()


def build_robust(
    dataset: Dataset,
    network: NetworkSpec,
    options: BuildOptions,
    allow_cone_notes: bool = False,
) -> MilpModel:
    """Robust formulation: first-layer rows carry dual-norm margins."""
    if options.robust is None:
        raise ModelBuildError("build_robust needs options.robust")
    return _Builder(dataset, network, options, None, allow_cone_notes).build()


def build_fixed(
    dataset: Dataset,
    network: NetworkSpec,
    options: BuildOptions,
    fixed: dict,
) -> MilpModel:
    """Formulation with the given weights/thresholds/activations substituted."""
    if options.robust is not None:
        raise ModelBuildError("fixation builds do not support uncertainty sets")
    return _Builder(dataset, network, options, fixed, False).build()
