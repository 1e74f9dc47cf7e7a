"""Command line interface: run experiments, compare runs, enumerate walks.

``run`` executes a seeded multi-replica search and writes CSVs, ``compare``
ranks two run directories by trials-to-threshold, ``enumerate`` dumps every
trajectory of a space up to a step cap (the oracle view). Exit code 0 on
success, 1 with a message on stderr for any rejection.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .environments import ENVIRONMENTS, make_env
from .harness import ExperimentConfig, compare_runs, read_csv_columns, run_experiment
from .search_space import enumerate_trajectories, load_graph

_RUN_FLAGS = {
    "env": "--env",
    "variant": "--variant",
    "algo": "--algo",
    "trials": "--trials",
    "replicas": "--replicas",
    "seed": "--seed",
    "learning_rate": "--lr",
    "entropy_coeff": "--entropy",
    "batch_size": "--batch-size",
    "queue_capacity": "--queue-k",
    "layers": "--layers",
    "branches": "--branches",
    "value_range": "--value-range",
    "max_steps": "--max-steps",
    "out": "--out",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="walknas",
        description="Policy-gradient search over directed-graph decision spaces")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a seeded multi-replica experiment")
    run.add_argument("--config", help="JSON config file; explicit flags override it")
    run.add_argument("--env", choices=sorted(ENVIRONMENTS))
    run.add_argument("--variant", choices=("linear", "graph"))
    run.add_argument("--algo", choices=("reinforce", "pqt"))
    run.add_argument("--trials", type=int)
    run.add_argument("--replicas", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--lr", type=float, dest="learning_rate")
    run.add_argument("--entropy", type=float, dest="entropy_coeff")
    run.add_argument("--batch-size", type=int, dest="batch_size")
    run.add_argument("--queue-k", type=int, dest="queue_capacity")
    run.add_argument("--layers", type=int, help="stack-layers target layer count")
    run.add_argument("--branches", type=int, help="select-optimizer branch count")
    run.add_argument("--value-range", type=int, nargs=2, metavar=("LO", "HI"),
                     dest="value_range")
    run.add_argument("--max-steps", type=int, dest="max_steps")
    run.add_argument("--out", help="directory for replica and aggregate CSVs")

    compare = sub.add_parser("compare",
                             help="compare two run directories by trials-to-threshold")
    compare.add_argument("run_a", help="output directory of the first run")
    compare.add_argument("run_b", help="output directory of the second run")
    compare.add_argument("--threshold", type=float, default=1.0)
    compare.add_argument("--out", help="write the full report as JSON")

    enum = sub.add_parser("enumerate",
                          help="dump all trajectories up to a step cap as JSON lines")
    enum.add_argument("--graph-file", help="graph description JSON file")
    enum.add_argument("--env", choices=sorted(ENVIRONMENTS))
    enum.add_argument("--variant", choices=("linear", "graph"), default="graph")
    enum.add_argument("--layers", type=int, default=10)
    enum.add_argument("--branches", type=int, default=2)
    enum.add_argument("--value-range", type=int, nargs=2, metavar=("LO", "HI"),
                      dest="value_range", default=(1, 100))
    enum.add_argument("--max-steps", type=int, default=10)
    enum.add_argument("--out", help="write the dump to a file instead of stdout")
    return parser


def _merged_run_config(args) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
        if not isinstance(base, dict):
            raise ValueError(f"config file {args.config} must hold a JSON object")
    for key in _RUN_FLAGS:
        value = getattr(args, key)
        if value is not None:
            base[key] = value
    return ExperimentConfig.from_dict(base)


def cmd_run(args) -> int:
    config = _merged_run_config(args)
    result = run_experiment(config)
    summary = result.summary
    print(f"env={config.env} variant={config.variant} algo={config.algo} "
          f"trials={config.trials} replicas={config.replicas} seed={config.seed}")
    print(f"final best across replicas: mean={summary['final_mean_best']:.6f} "
          f"min={summary['final_min_best']:.6f} max={summary['final_max_best']:.6f}")
    if config.out:
        print(f"wrote per-replica CSVs, aggregate.csv and summary.json to {config.out}")
    return 0


def _load_best_curves(directory) -> list[list[float]]:
    directory = Path(directory)
    replica_files = sorted(directory.glob("replica_*.csv"))
    if not replica_files:
        raise ValueError(f"no replica_*.csv files under {directory}")
    return [read_csv_columns(path)["best"] for path in replica_files]


def cmd_compare(args) -> int:
    report = compare_runs(_load_best_curves(args.run_a),
                          _load_best_curves(args.run_b), args.threshold)
    names = {"a": args.run_a, "b": args.run_b, None: None}
    print(f"threshold={report.threshold} trials={report.trials}")
    print(f"a={args.run_a}: median trials-to-threshold {report.median_a}, "
          f"final mean best {report.mean_a[-1]:.6f}")
    print(f"b={args.run_b}: median trials-to-threshold {report.median_b}, "
          f"final mean best {report.mean_b[-1]:.6f}")
    if report.winner is None:
        print("no dominant run: medians tie")
    else:
        print(f"dominant run: {names[report.winner]}")
    print(f"final mean-best gap (a - b): {report.final_gap:.6f}")
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        print(f"wrote report to {args.out}")
    return 0


def cmd_enumerate(args) -> int:
    if args.graph_file:
        graph = load_graph(args.graph_file)
    elif args.env == "stack_layers":
        graph = make_env(args.env, target_layers=args.layers,
                         variant=args.variant).graph
    elif args.env == "select_optimizer":
        graph = make_env(args.env, num_branches=args.branches,
                         value_range=tuple(args.value_range),
                         variant=args.variant).graph
    else:
        raise ValueError("enumerate needs --graph-file or --env")
    lines = []
    for trajectory in enumerate_trajectories(graph, args.max_steps):
        lines.append(json.dumps({
            "length": len(trajectory),
            "vertices": [vid for vid, _ in trajectory.steps],
            "actions": list(trajectory.actions),
            "labels": [graph.edge(eid).label for eid in trajectory.actions],
            "final_vertex": trajectory.final_vertex,
        }))
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {len(lines)} trajectories to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "compare": cmd_compare, "enumerate": cmd_enumerate}
    try:
        return handlers[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
