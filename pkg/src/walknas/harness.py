"""Experiment orchestration: seeded replicas, CSV emission, comparison reports.

Replica i runs with seed = base seed + i, owns its own controller and
trainer state, and writes one per-trial CSV; an aggregate CSV carries the
across-replica best-so-far envelope. Comparisons rank two runs by median
trials-to-threshold.
"""
from __future__ import annotations

import csv
import json
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .controller import ControllerConfig
from .environments import make_env
from .training import PqtConfig, ReinforceConfig, RunHistory, run_search

HISTORY_HEADER = ("trial", "reward", "best", "moving_avg")
AGGREGATE_HEADER = ("trial", "mean_best", "min_best", "max_best")

ALGORITHMS = ("reinforce", "pqt")


@dataclass
class ExperimentConfig:
    env: str = "stack_layers"
    variant: str = "graph"
    algo: str = "reinforce"
    trials: int = 200
    replicas: int = 10
    seed: int = 0
    learning_rate: float = 1e-3
    entropy_coeff: float = 0.1
    batch_size: int = 1
    queue_capacity: int = 10
    layers: int = 10
    branches: int = 2
    value_range: tuple[int, int] = (1, 100)
    max_steps: int | None = None
    out: str | None = None
    controller: ControllerConfig = field(default_factory=ControllerConfig)

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algo!r}; known: {ALGORITHMS}")
        self.value_range = tuple(self.value_range)

    def replica_seed(self, index: int) -> int:
        return self.seed + index

    def build_env(self):
        if self.env == "stack_layers":
            return make_env(self.env, target_layers=self.layers, variant=self.variant,
                            max_steps=self.max_steps)
        return make_env(self.env, num_branches=self.branches,
                        value_range=self.value_range, variant=self.variant,
                        max_steps=self.max_steps)

    def algo_config(self):
        if self.algo == "pqt":
            return PqtConfig(learning_rate=self.learning_rate,
                             entropy_coeff=self.entropy_coeff,
                             queue_capacity=self.queue_capacity,
                             batch_size=self.batch_size)
        return ReinforceConfig(learning_rate=self.learning_rate,
                               entropy_coeff=self.entropy_coeff,
                               batch_size=self.batch_size)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["value_range"] = list(self.value_range)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        if "controller" in data and isinstance(data["controller"], dict):
            data["controller"] = ControllerConfig(**data["controller"])
        if "value_range" in data:
            data["value_range"] = tuple(data["value_range"])
        return cls(**data)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    histories: list[RunHistory]
    summary: dict


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def emit_history_csv(history: RunHistory, path):
    """Per-trial CSV: trial, reward, best, moving_avg."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        for record in history.trials:
            writer.writerow([record.trial, _fmt(record.reward), _fmt(record.best),
                             _fmt(record.moving_avg)])


def aggregate_best(histories) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(mean, min, max) best-so-far across replicas at each trial index."""
    curves = np.array([_best_curve(h) for h in histories])
    return curves.mean(axis=0), curves.min(axis=0), curves.max(axis=0)


def emit_aggregate_csv(histories, path):
    """Across-replica CSV: trial, mean_best, min_best, max_best."""
    path = Path(path)
    mean, low, high = (aggregate_best(histories) if histories else
                       (np.array([]), np.array([]), np.array([])))
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(AGGREGATE_HEADER)
        for trial in range(mean.size):
            writer.writerow([trial + 1, _fmt(mean[trial]), _fmt(low[trial]),
                             _fmt(high[trial])])


def emit_csv(data, path):
    """Write either one history or a collection of them (aggregate form)."""
    if isinstance(data, RunHistory):
        emit_history_csv(data, path)
    else:
        emit_aggregate_csv(list(data), path)


def read_csv_columns(path) -> dict[str, list[float]]:
    """Parse an emitted CSV back into float columns keyed by header name."""
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        columns: dict[str, list[float]] = {name: [] for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                columns[name].append(float(cell))
    return columns


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Execute every replica with its derived seed; optionally write CSVs."""
    env = config.build_env()
    algo_config = config.algo_config()
    histories = [
        run_search(env, algo_config, config.controller, config.trials,
                   config.replica_seed(i))
        for i in range(config.replicas)
    ]
    mean, low, high = aggregate_best(histories)
    summary = {
        "config": config.to_dict(),
        "final_mean_best": float(mean[-1]),
        "final_min_best": float(low[-1]),
        "final_max_best": float(high[-1]),
        "final_best_per_replica": [float(_best_curve(h)[-1]) for h in histories],
    }
    if config.out:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        for i, history in enumerate(histories):
            emit_history_csv(history, out / f"replica_{i:02d}.csv")
        emit_aggregate_csv(histories, out / "aggregate.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return ExperimentResult(config, histories, summary)


def _best_curve(run) -> np.ndarray:
    if isinstance(run, RunHistory):
        return run.best_curve()
    return np.asarray(run, dtype=np.float64)


def trials_to_threshold(best_curve, threshold: float) -> int | None:
    """First 1-based trial whose best-so-far reaches the threshold."""
    curve = np.asarray(best_curve)
    hits = np.nonzero(curve >= threshold)[0]
    return int(hits[0]) + 1 if hits.size else None


@dataclass
class ComparisonReport:
    threshold: float
    trials: int
    mean_a: list[float]
    min_a: list[float]
    max_a: list[float]
    mean_b: list[float]
    min_b: list[float]
    max_b: list[float]
    trials_to_threshold_a: list[int | None]
    trials_to_threshold_b: list[int | None]
    median_a: float
    median_b: float
    winner: str | None  # "a", "b", or None when the medians tie
    final_gap: float  # mean_a[-1] - mean_b[-1]

    def to_dict(self) -> dict:
        return asdict(self)


def compare_runs(run_a, run_b, threshold: float) -> ComparisonReport:
    """Rank two replica sets by median trials-to-threshold.

    Each argument is a list of RunHistory or best-so-far sequences; all
    replicas must share one trial budget. A replica that never reaches the
    threshold counts as budget + 1.
    """
    curves_a = [_best_curve(run) for run in run_a]
    curves_b = [_best_curve(run) for run in run_b]
    if not curves_a or not curves_b:
        raise ValueError("both runs need at least one replica")
    lengths = {curve.size for curve in curves_a + curves_b}
    if len(lengths) != 1:
        raise ValueError(f"trial budgets differ across replicas: {sorted(lengths)}")
    budget = lengths.pop()
    stack_a = np.array(curves_a)
    stack_b = np.array(curves_b)
    hits_a = [trials_to_threshold(curve, threshold) for curve in curves_a]
    hits_b = [trials_to_threshold(curve, threshold) for curve in curves_b]
    absent = budget + 1
    median_a = float(statistics.median(h if h is not None else absent for h in hits_a))
    median_b = float(statistics.median(h if h is not None else absent for h in hits_b))
    if median_a < median_b:
        winner = "a"
    elif median_b < median_a:
        winner = "b"
    else:
        winner = None
    return ComparisonReport(
        threshold=threshold,
        trials=budget,
        mean_a=stack_a.mean(axis=0).tolist(),
        min_a=stack_a.min(axis=0).tolist(),
        max_a=stack_a.max(axis=0).tolist(),
        mean_b=stack_b.mean(axis=0).tolist(),
        min_b=stack_b.min(axis=0).tolist(),
        max_b=stack_b.max(axis=0).tolist(),
        trials_to_threshold_a=hits_a,
        trials_to_threshold_b=hits_b,
        median_a=median_a,
        median_b=median_b,
        winner=winner,
        final_gap=float(stack_a.mean(axis=0)[-1] - stack_b.mean(axis=0)[-1]),
    )
