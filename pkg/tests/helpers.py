"""Shared test utilities: flat-vector views of tape computations.

The finite-difference checker wants a function from one flat float64 vector
to (scalar, gradient vector); these helpers build such functions out of
tape computations and out of whole controller parameter sets.
"""
from __future__ import annotations

import numpy as np

from walknas import Tape
from walknas.controller import ControllerParams, trace_step, trace_trajectory, register_params


def tape_function(builder, shapes: dict[str, tuple]):
    """Wrap a tape builder as f(flat vector) -> (value, flat gradient).

    ``builder(tape, refs)`` returns the scalar output node; ``shapes`` maps
    parameter names to shapes, in the order they occupy the flat vector.
    """
    def f(vec):
        tape = Tape()
        refs = {}
        offset = 0
        for name, shape in shapes.items():
            size = int(np.prod(shape))
            refs[name] = tape.parameter(name, vec[offset:offset + size].reshape(shape))
            offset += size
        out = builder(tape, refs)
        grads = tape.backward(out)
        flat = np.concatenate([grads[name].ravel() for name in shapes])
        return float(tape.value(out)), flat

    total = sum(int(np.prod(shape)) for shape in shapes.values())
    return f, total


def flatten_params(params: ControllerParams) -> np.ndarray:
    return np.concatenate([value.ravel() for value in params.tensors.values()])


def write_params(params: ControllerParams, vec: np.ndarray):
    offset = 0
    for name, value in params.tensors.items():
        size = value.size
        params.tensors[name] = vec[offset:offset + size].reshape(value.shape).copy()
        offset += size


def randomize_params(params: ControllerParams, rng: np.random.Generator):
    """Re-draw every tensor at fan-in scale so gradients are well conditioned
    for finite-difference probing (the shipped init is much smaller)."""
    for name, value in params.tensors.items():
        if value.ndim == 2:
            scale = 1.0 / np.sqrt(value.shape[1])
        else:
            scale = 0.5
        params.tensors[name] = rng.uniform(-scale, scale, value.shape)


def step_logprob_function(params: ControllerParams, vertex: int, action_index: int):
    """The one-step action log-prob loss as a function of the flat parameters."""
    shapes = {name: value.shape for name, value in params.tensors.items()}
    template = ControllerParams(params.graph, params.config, dict(params.tensors))

    def builder(tape, refs):
        hidden = tape.constant(np.zeros(params.config.lstm_hidden_dim))
        cell = tape.constant(np.zeros(params.config.lstm_hidden_dim))
        logits, _ = trace_step(tape, refs, template, vertex, None, (hidden, cell))
        log_probs = tape.apply("log_softmax", logits)
        return tape.apply("nll", log_probs, index=action_index)

    return tape_function(builder, shapes)


def trajectory_logprob_function(params: ControllerParams, trajectory):
    """Total trajectory log-prob loss as a function of the flat parameters."""
    shapes = {name: value.shape for name, value in params.tensors.items()}

    def f(vec):
        working = ControllerParams(params.graph, params.config, {})
        offset = 0
        for name, shape in shapes.items():
            size = int(np.prod(shape))
            working.tensors[name] = vec[offset:offset + size].reshape(shape)
            offset += size
        tape = Tape()
        refs = register_params(tape, working)
        logp, _ = trace_trajectory(tape, refs, working, trajectory)
        loss = tape.apply("scale", logp, factor=-1.0)
        grads = tape.backward(loss)
        flat = np.concatenate([grads[name].ravel() for name in shapes])
        return float(tape.value(loss)), flat

    total = sum(int(np.prod(shape)) for shape in shapes.values())
    return f, total
