"""Toy reward tasks: iterative layer stacking and branching optimizer selection.

Both decode a trajectory into a decision record, score it, and map the raw
score onto [0, 1]. Truncated walks always score 0. Environments are pure:
identical decodes always earn identical rewards.
"""
from __future__ import annotations

from dataclasses import dataclass

from .search_space import (ADD_LAYER, HYPERPARAMS_PER_BRANCH, STOP, SearchGraph,
                           Trajectory, build_select_optimizer, build_stack_layers,
                           check_trajectory)

DEFAULT_STACK_CAP = 50  # sampling cap for the cyclic stack-layers walk

UNSET_SLOT_PENALTY = 50 ** 2  # full charge per hyperparameter after the first wrong one


def stack_layers_raw_reward(layers: int, target_layers: int) -> float:
    """Negative squared error against the target layer count."""
    if layers < 0:
        raise ValueError(f"layer count must be >= 0, got {layers}")
    return -float((layers - target_layers) ** 2)


def stack_layers_reward(layers: int, target_layers: int) -> float:
    """Squared-error reward mapped onto [0, 1], clamped at zero.

    Exact on the linear encoding's support (0..2*target_layers); the clamp
    covers the unbounded cyclic encoding.
    """
    raw = stack_layers_raw_reward(layers, target_layers)
    return max(0.0, 1.0 + raw / target_layers ** 2)


def select_optimizer_raw_reward(values, target: int = 50) -> float:
    """First wrong slot is charged its squared deviation, every later slot a
    full UNSET_SLOT_PENALTY; an all-correct setting scores 0."""
    values = tuple(values)
    for position, value in enumerate(values):
        if value != target:
            deviation = (value - target) ** 2
            remaining = len(values) - position - 1
            return -float(deviation + remaining * UNSET_SLOT_PENALTY)
    return 0.0


def select_optimizer_normalizer(value_range: tuple[int, int], target: int = 50) -> float:
    """Magnitude of the worst possible raw reward for the given range."""
    low, high = value_range
    worst_deviation = max((low - target) ** 2, (high - target) ** 2)
    return float(worst_deviation + (HYPERPARAMS_PER_BRANCH - 1) * UNSET_SLOT_PENALTY)


def select_optimizer_reward(branch: int, values, num_branches: int,
                            value_range: tuple[int, int] = (1, 100),
                            target: int = 50) -> float:
    """Normalized branching-task reward in [0, 1]."""
    if not 1 <= branch <= num_branches:
        raise ValueError(f"branch {branch} outside 1..{num_branches}")
    values = tuple(values)
    if len(values) != HYPERPARAMS_PER_BRANCH:
        raise ValueError(f"expected {HYPERPARAMS_PER_BRANCH} hyperparameters, "
                         f"got {len(values)}")
    low, high = value_range
    for value in values:
        if not low <= value <= high:
            raise ValueError(f"hyperparameter {value} outside range {value_range}")
    raw = select_optimizer_raw_reward(values, target)
    return 1.0 + raw / select_optimizer_normalizer(value_range, target)


@dataclass(frozen=True)
class RewardedTrial:
    trajectory: Trajectory
    decoded: object
    raw_reward: float
    reward: float  # normalized, in [0, 1]


class StackLayersEnv:
    """Choose how many layers to stack; hitting the target exactly earns 1.0."""

    name = "stack_layers"

    def __init__(self, target_layers: int = 10, variant: str = "graph",
                 max_steps: int | None = None):
        self.target_layers = target_layers
        self.variant = variant
        self.graph: SearchGraph = build_stack_layers(variant, target_layers)
        if max_steps is None:
            max_steps = 2 * target_layers if variant == "linear" else DEFAULT_STACK_CAP
        if max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {max_steps}")
        self.max_steps = max_steps

    def decode(self, trajectory: Trajectory) -> int:
        """Layer count: add-layer actions before the first stop."""
        check_trajectory(self.graph, trajectory)
        layers = 0
        for _, eid in trajectory.steps:
            label = self.graph.edge(eid).label
            if label == STOP:
                break
            if label == ADD_LAYER:
                layers += 1
        return layers

    def reward(self, trajectory: Trajectory) -> RewardedTrial:
        layers = self.decode(trajectory)
        raw = stack_layers_raw_reward(layers, self.target_layers)
        normalized = 0.0 if trajectory.truncated else stack_layers_reward(
            layers, self.target_layers)
        return RewardedTrial(trajectory, layers, raw, normalized)


class SelectOptimizerEnv:
    """Pick one optimizer branch, then four integer hyperparameters for it."""

    name = "select_optimizer"

    def __init__(self, num_branches: int = 2, value_range: tuple[int, int] = (1, 100),
                 variant: str = "graph", target_value: int = 50,
                 max_steps: int | None = None):
        low, high = value_range
        if not low <= target_value <= high:
            raise ValueError(f"target {target_value} outside range {value_range}")
        self.num_branches = num_branches
        self.value_range = (low, high)
        self.variant = variant
        self.target_value = target_value
        self.graph: SearchGraph = build_select_optimizer(variant, num_branches,
                                                         self.value_range)
        if max_steps is None:
            max_steps = (1 + HYPERPARAMS_PER_BRANCH if variant == "graph"
                         else 1 + HYPERPARAMS_PER_BRANCH * num_branches)
        self.max_steps = max_steps

    def decode(self, trajectory: Trajectory):
        """(branch, hyperparameters); the linear encoding reads only the
        chosen branch's block and ignores the rest."""
        check_trajectory(self.graph, trajectory)
        if trajectory.truncated:
            raise ValueError("truncated walk does not reach a full configuration")
        labels = [self.graph.edge(eid).label for eid in trajectory.actions]
        branch = int(labels[0].split("-", 1)[1])
        if self.variant == "graph":
            block = labels[1:1 + HYPERPARAMS_PER_BRANCH]
        else:
            start = 1 + (branch - 1) * HYPERPARAMS_PER_BRANCH
            block = labels[start:start + HYPERPARAMS_PER_BRANCH]
        return branch, tuple(int(label) for label in block)

    def reward(self, trajectory: Trajectory) -> RewardedTrial:
        if trajectory.truncated:
            check_trajectory(self.graph, trajectory)
            return RewardedTrial(trajectory, None, float("-inf"), 0.0)
        branch, values = self.decode(trajectory)
        raw = select_optimizer_raw_reward(values, self.target_value)
        return RewardedTrial(trajectory, (branch, values), raw,
                             select_optimizer_reward(branch, values, self.num_branches,
                                                     self.value_range, self.target_value))


ENVIRONMENTS = {
    StackLayersEnv.name: StackLayersEnv,
    SelectOptimizerEnv.name: SelectOptimizerEnv,
}


def make_env(name: str, **kwargs):
    if name not in ENVIRONMENTS:
        known = ", ".join(sorted(ENVIRONMENTS))
        raise ValueError(f"unknown environment {name!r}; known: {known}")
    return ENVIRONMENTS[name](**kwargs)
