"""Dynamic recurrent policy over a search graph.

Shared tables (vertex and action embeddings), a dense aggregator, and an
LSTM cell are timestep independent; each decision vertex owns a private
logit head over its out-edges, so a revisited vertex reuses the same head.
One embedding row per edge id; the extra action row is a learned start
token standing in for the action before the first step.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Array, Tape, entropy, log_softmax, sigmoid, softmax
from .search_space import (SearchGraph, Trajectory, check_trajectory,
                           require_valid)

INIT_SCALE = 0.5  # embeddings, aggregator, and recurrent weights
HEAD_INIT_SCALE = 0.05  # logit heads start near uniform
FORGET_GATE_BIAS = 1.0
CHECKPOINT_VERSION = 1

GATES = ("input", "forget", "cell", "output")


@dataclass(frozen=True)
class ControllerConfig:
    state_embedding_dim: int = 16
    action_embedding_dim: int = 16
    aggregator_hidden_dim: int = 32
    lstm_hidden_dim: int = 48

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")


@dataclass
class RnnState:
    hidden: Array
    cell: Array

    @classmethod
    def zeros(cls, config: ControllerConfig) -> "RnnState":
        return cls(np.zeros(config.lstm_hidden_dim), np.zeros(config.lstm_hidden_dim))


@dataclass
class ControllerParams:
    """All learnable tensors, keyed by table name (heads carry the vertex id)."""

    graph: SearchGraph
    config: ControllerConfig
    tensors: dict[str, Array]

    @property
    def start_action_row(self) -> int:
        return self.graph.num_edges


def head_weight_key(vid: int) -> str:
    return f"head.{vid}.weight"


def head_bias_key(vid: int) -> str:
    return f"head.{vid}.bias"


def init_params(graph: SearchGraph, config: ControllerConfig | None = None,
                seed=0) -> ControllerParams:
    """Fresh parameters, deterministic for a given seed.

    Shared-network weights are uniform in [-INIT_SCALE, INIT_SCALE] so the
    recurrent state has O(1) magnitude (heads learn at a useful rate even at
    small learning rates); head weights use the smaller HEAD_INIT_SCALE so
    initial policies stay near uniform. Biases are zero except the forget
    gate, which starts at FORGET_GATE_BIAS.
    """
    require_valid(graph)
    config = config or ControllerConfig()
    decisions = graph.decision_ids()
    if not decisions:
        raise ValueError("graph has no decision vertices")
    rng = np.random.default_rng(seed)

    def uniform(*shape, scale=INIT_SCALE):
        return rng.uniform(-scale, scale, shape)

    tensors: dict[str, Array] = {}
    tensors["state_embedding"] = uniform(graph.num_vertices, config.state_embedding_dim)
    tensors["action_embedding"] = uniform(graph.num_edges + 1, config.action_embedding_dim)
    concat_dim = config.state_embedding_dim + config.action_embedding_dim
    tensors["aggregator.weight"] = uniform(config.aggregator_hidden_dim, concat_dim)
    tensors["aggregator.bias"] = np.zeros(config.aggregator_hidden_dim)
    for gate in GATES:
        tensors[f"lstm.{gate}.input_weight"] = uniform(
            config.lstm_hidden_dim, config.aggregator_hidden_dim)
        tensors[f"lstm.{gate}.recurrent_weight"] = uniform(
            config.lstm_hidden_dim, config.lstm_hidden_dim)
        bias = np.zeros(config.lstm_hidden_dim)
        if gate == "forget":
            bias += FORGET_GATE_BIAS
        tensors[f"lstm.{gate}.bias"] = bias
    for vid in decisions:
        width = len(graph.out_edges(vid))
        tensors[head_weight_key(vid)] = uniform(width, config.lstm_hidden_dim,
                                                scale=HEAD_INIT_SCALE)
        tensors[head_bias_key(vid)] = np.zeros(width)
    return ControllerParams(graph, config, tensors)


def _action_row(params: ControllerParams, action: int | None) -> int:
    return params.start_action_row if action is None else action


def _raw_step(params: ControllerParams, vertex: int, prev_action: int | None,
              hidden: Array, cell: Array):
    """One forward step without a tape. Mirrors trace_step op for op, so the
    two paths produce bitwise-identical numbers."""
    t = params.tensors
    state_emb = t["state_embedding"][vertex]
    action_emb = t["action_embedding"][_action_row(params, prev_action)]
    merged = np.concatenate((state_emb, action_emb))
    aggregated = np.tanh((t["aggregator.weight"] @ merged) + t["aggregator.bias"])
    activations = {}
    for gate in GATES:
        pre = ((t[f"lstm.{gate}.input_weight"] @ aggregated)
               + (t[f"lstm.{gate}.recurrent_weight"] @ hidden)) + t[f"lstm.{gate}.bias"]
        activations[gate] = np.tanh(pre) if gate == "cell" else sigmoid(pre)
    new_cell = (activations["forget"] * cell) + (activations["input"] * activations["cell"])
    new_hidden = activations["output"] * np.tanh(new_cell)
    logits = (t[head_weight_key(vertex)] @ new_hidden) + t[head_bias_key(vertex)]
    return logits, new_hidden, new_cell


def step(params: ControllerParams, vertex: int, prev_action: int | None,
         rnn_state: RnnState | None = None):
    """Logits over the vertex's out-edges plus the next recurrent state.

    ``prev_action`` must be an edge into ``vertex``, or None for the start
    token on the first step of a walk.
    """
    graph = params.graph
    if graph.is_terminal(vertex):
        raise ValueError(f"vertex {vertex} is terminal and has no action distribution")
    if prev_action is not None:
        if not (0 <= prev_action < graph.num_edges):
            raise ValueError(f"unknown action {prev_action}")
        if graph.edge(prev_action).dst != vertex:
            raise ValueError(f"action {prev_action} does not lead to vertex {vertex}")
    if rnn_state is None:
        rnn_state = RnnState.zeros(params.config)
    logits, hidden, cell = _raw_step(params, vertex, prev_action,
                                     rnn_state.hidden, rnn_state.cell)
    return logits, RnnState(hidden, cell)


def register_params(tape: Tape, params: ControllerParams) -> dict[str, int]:
    """Put every tensor on the tape; backward then covers all of them."""
    return {name: tape.parameter(name, value) for name, value in params.tensors.items()}


def trace_step(tape: Tape, refs: dict[str, int], params: ControllerParams,
               vertex: int, prev_action: int | None, state: tuple[int, int]):
    """Differentiable twin of the raw step; ``state`` is a pair of node ids."""
    state_emb = tape.apply("lookup", refs["state_embedding"], row=vertex)
    action_emb = tape.apply("lookup", refs["action_embedding"],
                            row=_action_row(params, prev_action))
    merged = tape.apply("concat", state_emb, action_emb)
    aggregated = tape.apply("tanh", tape.apply(
        "add", tape.apply("matmul", refs["aggregator.weight"], merged),
        refs["aggregator.bias"]))
    hidden, cell = state
    activations = {}
    for gate in GATES:
        from_input = tape.apply("matmul", refs[f"lstm.{gate}.input_weight"], aggregated)
        from_state = tape.apply("matmul", refs[f"lstm.{gate}.recurrent_weight"], hidden)
        pre = tape.apply("add", tape.apply("add", from_input, from_state),
                         refs[f"lstm.{gate}.bias"])
        activations[gate] = tape.apply("tanh" if gate == "cell" else "sigmoid", pre)
    new_cell = tape.apply("add",
                          tape.apply("mul", activations["forget"], cell),
                          tape.apply("mul", activations["input"], activations["cell"]))
    new_hidden = tape.apply("mul", activations["output"], tape.apply("tanh", new_cell))
    logits = tape.apply("add",
                        tape.apply("matmul", refs[head_weight_key(vertex)], new_hidden),
                        refs[head_bias_key(vertex)])
    return logits, (new_hidden, new_cell)


def _draw(probs: Array, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from a probability vector."""
    r = rng.random()
    cumulative = np.cumsum(probs)
    index = int(np.searchsorted(cumulative, r, side="right"))
    return min(index, probs.size - 1)


def sample_trajectory(params: ControllerParams, rng: np.random.Generator,
                      max_steps: int):
    """Walk from the start vertex, sampling each action from the policy.

    Returns (trajectory, per-step log-probs, per-step entropies). The walk
    stops at a terminal or is flagged truncated after ``max_steps`` steps.
    """
    if max_steps < 1:
        raise ValueError(f"max_steps must be >= 1, got {max_steps}")
    graph = params.graph
    hidden = np.zeros(params.config.lstm_hidden_dim)
    cell = np.zeros(params.config.lstm_hidden_dim)
    vertex = graph.start
    prev_action: int | None = None
    steps: list[tuple[int, int]] = []
    log_probs: list[float] = []
    entropies: list[float] = []
    while True:
        logits, hidden, cell = _raw_step(params, vertex, prev_action, hidden, cell)
        probs = softmax(logits)
        choice = _draw(probs, rng)
        eid = graph.out_edges(vertex)[choice]
        steps.append((vertex, eid))
        log_probs.append(float(log_softmax(logits)[choice]))
        entropies.append(entropy(probs))
        prev_action = eid
        vertex = graph.edge(eid).dst
        if graph.is_terminal(vertex):
            return Trajectory(tuple(steps), vertex, False), log_probs, entropies
        if len(steps) == max_steps:
            return Trajectory(tuple(steps), vertex, True), log_probs, entropies


def trace_trajectory(tape: Tape, refs: dict[str, int], params: ControllerParams,
                     trajectory: Trajectory):
    """Traced total log-probability and total entropy of a forced walk."""
    graph = params.graph
    check_trajectory(graph, trajectory)
    hidden = tape.constant(np.zeros(params.config.lstm_hidden_dim))
    cell = tape.constant(np.zeros(params.config.lstm_hidden_dim))
    state = (hidden, cell)
    prev_action: int | None = None
    total_logp = None
    total_entropy = None
    for vertex, eid in trajectory.steps:
        logits, state = trace_step(tape, refs, params, vertex, prev_action, state)
        choice = graph.out_edges(vertex).index(eid)
        log_probs = tape.apply("log_softmax", logits)
        step_logp = tape.apply("scale", tape.apply("nll", log_probs, index=choice),
                               factor=-1.0)
        step_entropy = tape.apply("entropy", tape.apply("softmax", logits))
        total_logp = step_logp if total_logp is None else tape.apply(
            "add", total_logp, step_logp)
        total_entropy = step_entropy if total_entropy is None else tape.apply(
            "add", total_entropy, step_entropy)
        prev_action = eid
    return total_logp, total_entropy


def score_trajectory(params: ControllerParams, trajectory: Trajectory):
    """(total log-prob, total entropy) of a trajectory under the current policy.

    Pure in (params, trajectory); replays the walk with forced actions and
    matches sample_trajectory's numbers exactly.
    """
    tape = Tape()
    refs = register_params(tape, params)
    logp, ent = trace_trajectory(tape, refs, params, trajectory)
    return float(tape.value(logp)), float(tape.value(ent))


# --- checkpoints ----------------------------------------------------------

def save_params(params: ControllerParams, path):
    """Structured-text checkpoint; floats round-trip bitwise through repr."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": {
            "state_embedding_dim": params.config.state_embedding_dim,
            "action_embedding_dim": params.config.action_embedding_dim,
            "aggregator_hidden_dim": params.config.aggregator_hidden_dim,
            "lstm_hidden_dim": params.config.lstm_hidden_dim,
        },
        "tensors": {
            name: {"shape": list(value.shape), "values": value.ravel().tolist()}
            for name, value in params.tensors.items()
        },
    }
    Path(path).write_text(json.dumps(payload))


def load_params(path, graph: SearchGraph) -> ControllerParams:
    data = json.loads(Path(path).read_text())
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
    config = ControllerConfig(**data["config"])
    tensors = {
        name: np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in data["tensors"].items()
    }
    expected = _expected_shapes(graph, config)
    actual = {name: value.shape for name, value in tensors.items()}
    if expected != actual:
        missing = sorted(set(expected) - set(actual))
        extra = sorted(set(actual) - set(expected))
        mismatched = sorted(name for name in expected
                            if name in actual and expected[name] != actual[name])
        raise ValueError(
            f"checkpoint does not fit the graph: missing={missing} "
            f"extra={extra} mismatched={mismatched}")
    return ControllerParams(graph, config, tensors)


def _expected_shapes(graph: SearchGraph, config: ControllerConfig) -> dict[str, tuple]:
    concat_dim = config.state_embedding_dim + config.action_embedding_dim
    shapes = {
        "state_embedding": (graph.num_vertices, config.state_embedding_dim),
        "action_embedding": (graph.num_edges + 1, config.action_embedding_dim),
        "aggregator.weight": (config.aggregator_hidden_dim, concat_dim),
        "aggregator.bias": (config.aggregator_hidden_dim,),
    }
    for gate in GATES:
        shapes[f"lstm.{gate}.input_weight"] = (config.lstm_hidden_dim,
                                               config.aggregator_hidden_dim)
        shapes[f"lstm.{gate}.recurrent_weight"] = (config.lstm_hidden_dim,
                                                   config.lstm_hidden_dim)
        shapes[f"lstm.{gate}.bias"] = (config.lstm_hidden_dim,)
    for vid in graph.decision_ids():
        width = len(graph.out_edges(vid))
        shapes[head_weight_key(vid)] = (width, config.lstm_hidden_dim)
        shapes[head_bias_key(vid)] = (width,)
    return shapes
