"""Policy-gradient training loops.

Two update rules: reward-baselined score-function updates with an entropy
bonus, and top-K queue training that ascends the log-likelihood of the best
distinct trajectories seen so far. Both take one Adam step per call and
mutate the controller parameters in place.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamState, Tape, adam_step
from .controller import (ControllerConfig, ControllerParams, init_params,
                         register_params, sample_trajectory, trace_trajectory)
from .search_space import Trajectory

MOVING_AVERAGE_WINDOW = 50


@dataclass
class ReinforceConfig:
    learning_rate: float = 1e-3
    entropy_coeff: float = 0.1
    baseline_decay: float = 0.95
    batch_size: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.entropy_coeff < 0:
            raise ValueError("entropy_coeff must be >= 0")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ValueError("baseline_decay must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class PqtConfig:
    learning_rate: float = 1e-3
    entropy_coeff: float = 0.8
    queue_capacity: int = 10
    batch_size: int = 1
    # 0 keeps the pure top-K likelihood objective; > 0 mixes in the
    # baselined policy-gradient term.
    policy_gradient_weight: float = 0.0
    baseline_decay: float = 0.95

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.entropy_coeff < 0:
            raise ValueError("entropy_coeff must be >= 0")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class QueueEntry:
    reward: float
    trajectory: Trajectory
    order: int  # arrival index; reward ties keep the earlier arrival


@dataclass
class TrainState:
    baseline: float | None = None
    queue: list[QueueEntry] = field(default_factory=list)
    adam: AdamState | None = None
    trials: int = 0
    arrivals: int = 0


@dataclass
class UpdateMetrics:
    loss: float
    mean_entropy: float
    baseline: float


@dataclass
class TrialRecord:
    trial: int
    reward: float
    best: float
    moving_avg: float


@dataclass
class RunHistory:
    """Per-trial reward log plus per-update training metrics for one replica."""

    trials: list[TrialRecord] = field(default_factory=list)
    updates: list[UpdateMetrics] = field(default_factory=list)

    def rewards(self) -> np.ndarray:
        return np.array([record.reward for record in self.trials])

    def best_curve(self) -> np.ndarray:
        return np.array([record.best for record in self.trials])


def _check_batch(batch):
    if not batch:
        raise ValueError("update needs a non-empty batch")
    for _, reward in batch:
        if not 0.0 <= reward <= 1.0:
            raise ValueError(f"reward {reward} outside [0, 1]")


def _prepare(params: ControllerParams, batch, state: TrainState):
    _check_batch(batch)
    if state.adam is None:
        state.adam = AdamState.for_params(params.tensors)
    batch_mean = sum(reward for _, reward in batch) / len(batch)
    if state.baseline is None:
        state.baseline = batch_mean
    return batch_mean


def reinforce_update(params: ControllerParams, batch, config: ReinforceConfig,
                     state: TrainState) -> UpdateMetrics:
    """One baselined policy-gradient step over a batch of rewarded trajectories.

    loss = -(1/n) sum (reward - baseline) * logp  -  coeff * (1/n) sum entropy
    The baseline moves to its exponential average after the step.
    """
    batch_mean = _prepare(params, batch, state)
    baseline = state.baseline
    tape = Tape()
    refs = register_params(tape, params)
    n = len(batch)
    loss = None
    entropies = []
    for trajectory, reward in batch:
        logp, ent = trace_trajectory(tape, refs, params, trajectory)
        entropies.append(float(tape.value(ent)))
        term = tape.apply("scale", logp, factor=-(reward - baseline) / n)
        if config.entropy_coeff != 0.0:
            term = tape.apply("add", term,
                              tape.apply("scale", ent, factor=-config.entropy_coeff / n))
        loss = term if loss is None else tape.apply("add", loss, term)
    grads = tape.backward(loss)
    adam_step(params.tensors, grads, config.learning_rate, state.adam)
    state.baseline = (config.baseline_decay * baseline
                      + (1.0 - config.baseline_decay) * batch_mean)
    state.trials += n
    return UpdateMetrics(float(tape.value(loss)), sum(entropies) / n, state.baseline)


def pqt_update(params: ControllerParams, batch, config: PqtConfig,
               state: TrainState) -> UpdateMetrics:
    """Absorb the batch into the top-K queue, then ascend queue log-likelihood.

    The queue keeps the K highest-reward trajectories with distinct action
    sequences; re-observed sequences leave it unchanged.
    """
    batch_mean = _prepare(params, batch, state)
    baseline = state.baseline
    known = {entry.trajectory.actions for entry in state.queue}
    for trajectory, reward in batch:
        key = trajectory.actions
        if key in known:
            continue
        known.add(key)
        state.queue.append(QueueEntry(reward, trajectory, state.arrivals))
        state.arrivals += 1
    state.queue.sort(key=lambda entry: (-entry.reward, entry.order))
    del state.queue[config.queue_capacity:]

    tape = Tape()
    refs = register_params(tape, params)
    loss = None
    for entry in state.queue:
        logp, _ = trace_trajectory(tape, refs, params, entry.trajectory)
        term = tape.apply("scale", logp, factor=-1.0 / len(state.queue))
        loss = term if loss is None else tape.apply("add", loss, term)
    n = len(batch)
    entropies = []
    for trajectory, reward in batch:
        logp, ent = trace_trajectory(tape, refs, params, trajectory)
        entropies.append(float(tape.value(ent)))
        if config.entropy_coeff != 0.0:
            loss = tape.apply("add", loss,
                              tape.apply("scale", ent, factor=-config.entropy_coeff / n))
        if config.policy_gradient_weight != 0.0:
            factor = -config.policy_gradient_weight * (reward - baseline) / n
            loss = tape.apply("add", loss, tape.apply("scale", logp, factor=factor))
    grads = tape.backward(loss)
    adam_step(params.tensors, grads, config.learning_rate, state.adam)
    state.baseline = (config.baseline_decay * baseline
                      + (1.0 - config.baseline_decay) * batch_mean)
    state.trials += n
    return UpdateMetrics(float(tape.value(loss)), sum(entropies) / n, state.baseline)


def run_search(env, algo_config, controller_config: ControllerConfig | None = None,
               trials: int = 200, seed: int = 0) -> RunHistory:
    """Sample, reward, and update until the trial budget is consumed.

    Fully deterministic for a given seed: one child seed initializes the
    controller, another drives sampling.
    """
    if trials < 1:
        raise ValueError(f"trial budget must be >= 1, got {trials}")
    if trials < algo_config.batch_size:
        raise ValueError("trial budget is smaller than one batch")
    init_seq, sample_seq = np.random.SeedSequence(seed).spawn(2)
    params = init_params(env.graph, controller_config, seed=init_seq)
    rng = np.random.default_rng(sample_seq)
    update = pqt_update if isinstance(algo_config, PqtConfig) else reinforce_update
    state = TrainState()
    history = RunHistory()
    best = float("-inf")
    window: deque[float] = deque(maxlen=MOVING_AVERAGE_WINDOW)
    done = 0
    while done < trials:
        size = min(algo_config.batch_size, trials - done)
        batch = []
        for _ in range(size):
            trajectory, _, _ = sample_trajectory(params, rng, env.max_steps)
            trial = env.reward(trajectory)
            batch.append((trajectory, trial.reward))
            done += 1
            best = max(best, trial.reward)
            window.append(trial.reward)
            history.trials.append(
                TrialRecord(done, trial.reward, best, sum(window) / len(window)))
        history.updates.append(update(params, batch, algo_config, state))
    return history
