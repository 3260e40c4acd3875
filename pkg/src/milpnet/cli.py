"""Command-line harness: train, evaluate, export and scripted experiments.

Exit codes: 0 success, 2 solver hit a limit with no incumbent, 3 model
infeasible, 1 any other error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    BdnnParams,
    Dataset,
    NetworkSpec,
    ThresholdMode,
    WeightDomain,
    compute_metrics,
    dataset_loss,
    predict_many,
)
from .data import SplitSpec, load_csv, minmax_scale, split, synthetic_random
from .datasplit import DatasplitError, train_datasplit
from .localsearch import LocalSearchError, local_search
from .model import BuildOptions, build_exact, build_partitioned, build_robust
from .robust import Norm, UncertaintySpec, robust_eval
from .solver import SolverConfig, SolverStatus, export_mps, kernel_name, solve

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_INCUMBENT = 2
EXIT_INFEASIBLE = 3

DESK_LIMITS = {"features": 20, "samples": 60, "width": 8}


class CliError(Exception):
    def __init__(self, message, code=EXIT_ERROR):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    """Echo of the parsed command line, validated for the chosen command."""

    command: str
    args: dict

    def __post_init__(self):
        data = self.args.get("data")
        if data is not None and not Path(data).exists():
            raise CliError(f"dataset file not found: {data}")
        params = self.args.get("params")
        if params is not None and not Path(params).exists():
            raise CliError(f"params file not found: {params}")


class RunLog:
    """Append-only line-delimited JSON log; exactly one per run."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")

    def append(self, record: dict):
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


def _add_data_args(p):
    p.add_argument("--data", help="CSV dataset path")
    p.add_argument("--label-col", type=int, default=-1, help="label column index")
    p.add_argument("--header", action="store_true", help="CSV has a header row")
    p.add_argument("--synthetic", metavar="M,N", help="generate M random points of dimension N")
    p.add_argument("--scale", action="store_true", help="min-max scale attributes to [0,1]")
    p.add_argument("--split", default="0.5,0.25,0.25", help="train,val,test fractions")
    p.add_argument("--seed", type=int, default=0)


def _add_network_args(p):
    p.add_argument("--hidden", default="2", help="comma-separated hidden layer widths")
    p.add_argument("--weights", choices=["box", "ternary"], default="ternary")
    p.add_argument("--bias", action="store_true")
    p.add_argument(
        "--thresholds", choices=["learned", "fixed-zero"], default="fixed-zero"
    )


def _add_solver_args(p):
    p.add_argument("--epsilon", type=float, default=1e-4, help="strict-inequality slack")
    p.add_argument("--time-limit", type=float, default=None, help="seconds per solve")
    p.add_argument("--gap-tol", type=float, default=0.0, help="stop gap in percent")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="milpnet",
        description="Train binarized step-activation networks with an embedded MILP solver.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network and save its parameters")
    _add_data_args(p)
    _add_network_args(p)
    _add_solver_args(p)
    p.add_argument("--method", choices=["exact", "ls", "ds", "robust"], default="exact")
    p.add_argument("--epochs", type=int, default=5, help="splitting epochs (ds)")
    p.add_argument("--batch", type=int, default=16, help="batch size (ds)")
    p.add_argument("--defense", type=float, default=0.0, help="defense radius (robust/ds)")
    p.add_argument(
        "--defense-norm", choices=["l1", "l2", "linf"], default="linf"
    )
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="evaluate saved parameters on a dataset")
    _add_data_args(p)
    p.add_argument("--params", required=True, help="params JSON from a training run")
    p.add_argument("--part", choices=["train", "val", "test", "all"], default="test")
    p.add_argument("--attack-levels", help="comma-separated attack magnitudes")
    p.add_argument("--reps", type=int, default=10, help="attack repetitions per level")
    p.add_argument("--out", help="output directory for the attack grid CSV")

    p = sub.add_parser("export", help="write a formulation as an MPS file without solving")
    _add_data_args(p)
    _add_network_args(p)
    _add_solver_args(p)
    p.add_argument(
        "--formulation", choices=["exact", "partitioned", "robust"], default="exact"
    )
    p.add_argument("--cells", type=int, default=1, help="partition cells (partitioned)")
    p.add_argument("--defense", type=float, default=0.0)
    p.add_argument("--defense-norm", choices=["l1", "l2", "linf"], default="linf")
    p.add_argument("--out", required=True, help="MPS file path")

    p = sub.add_parser("experiment", help="run a named scripted experiment")
    p.add_argument(
        "--name",
        required=True,
        choices=["synthetic-curve", "runtime-curve", "robust-grid"],
    )
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    p.add_argument("--m-values", default=None, help="training sizes, comma-separated")
    p.add_argument("--n", type=int, default=None, help="feature dimension")
    p.add_argument("--hidden", default=None, help="hidden widths")
    p.add_argument("--time-limit", type=float, default=30.0, help="seconds per solve")
    p.add_argument(
        "--defense-levels", default="0,0.05", help="defense radii (robust-grid)"
    )
    p.add_argument(
        "--attack-levels", default="0,0.1", help="attack magnitudes (robust-grid)"
    )
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _floats(text):
    return [float(v) for v in str(text).split(",") if v != ""]


def _ints(text):
    return [int(v) for v in str(text).split(",") if v != ""]


def _resolve_dataset(args) -> Dataset:
    if args.data and args.synthetic:
        raise CliError("give either --data or --synthetic, not both")
    if args.data:
        return load_csv(args.data, label_column=args.label_col, header=args.header)
    if args.synthetic:
        m, n = _ints(args.synthetic)
        return synthetic_random(m, n, seed=args.seed)
    raise CliError("a dataset is required: --data or --synthetic")


def _network_from(args, n_features, n_classes) -> NetworkSpec:
    hidden = tuple(_ints(args.hidden)) if args.hidden else ()
    return NetworkSpec(
        widths=(n_features, *hidden, n_classes),
        weight_domain=WeightDomain(args.weights),
        use_bias=args.bias,
        threshold_mode=(
            ThresholdMode.LEARNED
            if args.thresholds == "learned"
            else ThresholdMode.FIXED_ZERO
        ),
    )


def _warn_if_paper_scale(dataset, network):
    if (
        dataset.num_features > DESK_LIMITS["features"]
        or dataset.num_samples > DESK_LIMITS["samples"]
        or max(network.widths) > DESK_LIMITS["width"]
    ):
        print(
            "warning: instance exceeds desk scale; exact solves at this size "
            "may need hours — consider a time limit or the ds method",
            file=sys.stderr,
        )


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        time_limit=args.time_limit,
        gap_tolerance=args.gap_tol,
        seed=args.seed,
    )


def _status_exit(status: SolverStatus):
    if status is SolverStatus.NO_INCUMBENT:
        raise CliError("solver hit its limit without an incumbent", EXIT_NO_INCUMBENT)
    if status is SolverStatus.INFEASIBLE:
        raise CliError("model is infeasible", EXIT_INFEASIBLE)
    if status is SolverStatus.UNBOUNDED:
        raise CliError("model is unbounded", EXIT_ERROR)


def _metrics_record(name, params, part) -> dict:
    metrics = compute_metrics(predict_many(params, part.samples), part.labels)
    return {
        "record": "metrics",
        "part": name,
        "accuracy": metrics.accuracy,
        "precision": metrics.precision,
        "recall": metrics.recall,
        "f1": metrics.f1,
    }


def _prepare_parts(args):
    dataset = _resolve_dataset(args)
    if args.scale:
        dataset, _ = minmax_scale(dataset)
    fractions = _floats(args.split)
    if len(fractions) != 3:
        raise CliError("--split needs three comma-separated fractions")
    parts = split(dataset, SplitSpec(*fractions, seed=args.seed))
    return dataset, parts


def cmd_train(args) -> int:
    config = RunConfig("train", vars(args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = RunLog(out_dir / "runlog.jsonl")
    log.append({"record": "config", "time": time.time(), **config.args})

    dataset, (train, val, test) = _prepare_parts(args)
    network = _network_from(args, dataset.num_features, dataset.num_classes)
    _warn_if_paper_scale(train, network)
    solver_config = _solver_config(args)
    defense = None
    if args.method == "robust" or (args.method == "ds" and args.defense > 0):
        defense = UncertaintySpec(Norm(args.defense_norm), args.defense)

    try:
        if args.method in ("exact", "robust"):
            options = BuildOptions(epsilon_strict=args.epsilon, robust=defense)
            if defense is None:
                model = build_exact(train, network, BuildOptions(epsilon_strict=args.epsilon))
            else:
                model = build_robust(train, network, options)
            result = solve(model, solver_config)
            _status_exit(result.status)
            params = model.decode(result.incumbent)
            log.append(
                {
                    "record": "solve",
                    "status": result.status.value,
                    "objective": result.objective,
                    "bound": result.best_bound,
                    "gap": result.gap,
                    "nodes": result.nodes,
                    "lp_iterations": result.lp_iterations,
                    "wall_time": result.wall_time,
                }
            )
        elif args.method == "ls":
            ls = local_search(
                train, network, seed=args.seed, epsilon=args.epsilon,
                solver_config=solver_config,
            )
            params = ls.params
            log.append(
                {
                    "record": "local_search",
                    "objective": ls.objective,
                    "trace": ls.trace,
                    "rounds": ls.rounds,
                    "restarts": ls.restarts,
                }
            )
        else:  # ds
            if val is None:
                raise CliError("the ds method needs a nonzero validation fraction")
            ds_res = train_datasplit(
                train,
                val,
                network,
                epochs=args.epochs,
                batch_size=args.batch,
                seed=args.seed,
                epsilon=args.epsilon,
                robust=defense,
                solver_config=solver_config,
            )
            params = ds_res.params
            for record in ds_res.records:
                log.append({"record": "epoch", **json.loads(record.to_json())})
    except (LocalSearchError, DatasplitError) as exc:
        log.append({"record": "error", "message": str(exc)})
        log.close()
        raise CliError(str(exc)) from exc

    params_path = out_dir / "params.json"
    params.save(params_path)
    log.append({"record": "train_loss", "value": dataset_loss(params, train)})
    for name, part in (("train", train), ("val", val), ("test", test)):
        if part is not None:
            record = _metrics_record(name, params, part)
            log.append(record)
            print(
                f"{name}: accuracy {record['accuracy']:.3f} precision "
                f"{record['precision']:.3f} recall {record['recall']:.3f} "
                f"f1 {record['f1']:.3f}"
            )
    log.append({"record": "artifacts", "params": str(params_path)})
    log.close()
    print(f"params written to {params_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    RunConfig("eval", vars(args))
    params = BdnnParams.load(args.params)
    dataset, parts = _prepare_parts(args)
    part = {
        "train": parts[0],
        "val": parts[1],
        "test": parts[2],
        "all": dataset,
    }[args.part]
    if part is None:
        raise CliError(f"requested part {args.part!r} is empty for this split")
    if part.num_features != params.network.input_dim:
        raise CliError(
            f"dataset has {part.num_features} features but params expect "
            f"{params.network.input_dim}"
        )
    metrics = compute_metrics(predict_many(params, part.samples), part.labels)
    print(
        f"accuracy {metrics.accuracy:.4f} precision {metrics.precision:.4f} "
        f"recall {metrics.recall:.4f} f1 {metrics.f1:.4f}"
    )
    if args.attack_levels:
        levels = _floats(args.attack_levels)
        table = robust_eval(params, part, levels, repetitions=args.reps, seed=args.seed)
        out_dir = Path(args.out) if args.out else Path(".")
        out_dir.mkdir(parents=True, exist_ok=True)
        grid_path = out_dir / "attack_accuracy.csv"
        with open(grid_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["attack_level", "accuracy"])
            for level, acc in table:
                writer.writerow([level, acc])
        for level, acc in table:
            print(f"attack {level}: accuracy {acc:.4f}")
        print(f"grid written to {grid_path}")
    return EXIT_OK


def cmd_export(args) -> int:
    RunConfig("export", vars(args))
    dataset, (train, _, _) = _prepare_parts(args)
    network = _network_from(args, dataset.num_features, dataset.num_classes)
    options_kwargs = {"epsilon_strict": args.epsilon}
    if args.formulation == "partitioned":
        from .datasplit import kmeans

        if args.cells == 1:
            cells = (tuple(range(train.num_samples)),)
        else:
            assign, _ = kmeans(train.samples, args.cells, seed=args.seed)
            cells = tuple(
                tuple(int(i) for i in np.flatnonzero(assign == c))
                for c in range(args.cells)
            )
        model = build_partitioned(
            train, network, BuildOptions(partition=cells, **options_kwargs)
        )
    elif args.formulation == "robust":
        defense = UncertaintySpec(Norm(args.defense_norm), args.defense)
        model = build_robust(
            train,
            network,
            BuildOptions(robust=defense, **options_kwargs),
            allow_cone_notes=True,
        )
    else:
        model = build_exact(train, network, BuildOptions(**options_kwargs))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_mps(model, out)
    print(
        f"wrote {out} ({model.num_variables} columns, "
        f"{len(model.constraints)} rows, {model.num_binary()} binaries)"
    )
    return EXIT_OK


def _experiment_dataset(m_train, n, seed):
    total = m_train + 20
    data = synthetic_random(total, n, seed=seed)
    train = data.subset(range(m_train))
    test = data.subset(range(m_train, total))
    return train, test


def cmd_experiment(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = _ints(args.seeds)
    if args.name in ("synthetic-curve", "runtime-curve"):
        m_values = _ints(args.m_values) if args.m_values else [10, 20, 30]
        n = args.n or 10
        hidden = _ints(args.hidden) if args.hidden else [4]
        rows = _curve_experiment(args.name, m_values, n, hidden, seeds, args.time_limit)
        path = out_dir / f"{args.name}.csv"
        header = ["method", "m", "mean", "min", "max"]
    else:
        rows = _robust_grid_experiment(
            _floats(args.defense_levels),
            _floats(args.attack_levels),
            seeds,
            args.n or 4,
            args.time_limit,
        )
        path = out_dir / "robust-grid.csv"
        header = None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {path}")
    return EXIT_OK


def _curve_experiment(name, m_values, n, hidden, seeds, time_limit):
    rows = []
    for method in ("exact", "ls", "ds"):
        for m in m_values:
            scores = []
            for seed in seeds:
                train, test = _experiment_dataset(m, n, seed)
                network = NetworkSpec(
                    widths=(n, *hidden, 2),
                    weight_domain=WeightDomain.TERNARY,
                    threshold_mode=ThresholdMode.FIXED_ZERO,
                )
                config = SolverConfig(time_limit=time_limit, seed=seed)
                started = time.perf_counter()
                if method == "exact":
                    model = build_exact(train, network)
                    result = solve(model, config)
                    if result.incumbent is None:
                        continue
                    params = model.decode(result.incumbent)
                elif method == "ls":
                    try:
                        params = local_search(
                            train, network, seed=seed, solver_config=config
                        ).params
                    except LocalSearchError:
                        continue
                else:
                    half = max(2, train.num_samples // 2)
                    val = test  # desk scale: reuse the held-out set for saving
                    try:
                        params = train_datasplit(
                            train, val, network,
                            epochs=3, batch_size=half, seed=seed,
                            solver_config=config,
                        ).params
                    except DatasplitError:
                        continue
                elapsed = time.perf_counter() - started
                if name == "runtime-curve":
                    scores.append(elapsed)
                else:
                    metrics = compute_metrics(
                        predict_many(params, test.samples), test.labels
                    )
                    scores.append(metrics.accuracy)
            if scores:
                rows.append(
                    [
                        method,
                        m,
                        float(np.mean(scores)),
                        float(np.min(scores)),
                        float(np.max(scores)),
                    ]
                )
    return rows


def _robust_grid_experiment(defense_levels, attack_levels, seeds, n, time_limit):
    accs = np.zeros((len(attack_levels), len(defense_levels)))
    counts = np.zeros_like(accs)
    for seed in seeds:
        train, test = _experiment_dataset(12, n, seed)
        train, transform = minmax_scale(train)
        test = Dataset(transform.apply(test.samples), test.labels)
        network = NetworkSpec(
            widths=(n, 2, 2),
            weight_domain=WeightDomain.TERNARY,
            threshold_mode=ThresholdMode.FIXED_ZERO,
        )
        for d, eps_d in enumerate(defense_levels):
            options = BuildOptions(robust=UncertaintySpec(Norm.LINF, eps_d))
            model = build_robust(train, network, options)
            result = solve(model, SolverConfig(time_limit=time_limit, seed=seed))
            if result.incumbent is None:
                continue
            params = model.decode(result.incumbent)
            table = robust_eval(params, test, attack_levels, repetitions=5, seed=seed)
            for a, (_, acc) in enumerate(table):
                accs[a, d] += acc
                counts[a, d] += 1
    rows = [["attack\\defense"] + [str(v) for v in defense_levels]]
    mean = np.divide(accs, counts, out=np.full_like(accs, np.nan), where=counts > 0)
    for a, eps_a in enumerate(attack_levels):
        rows.append([str(eps_a)] + [f"{v:.4f}" for v in mean[a]])
    return rows


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": cmd_train,
        "eval": cmd_eval,
        "export": cmd_export,
        "experiment": cmd_experiment,
    }
    try:
        return handlers[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
