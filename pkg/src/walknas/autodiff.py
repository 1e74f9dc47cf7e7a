"""Reverse-mode automatic differentiation on a flat tape.

Value carriers are float64 numpy arrays (row-major). The primitive set is
exactly what the recurrent policy network needs: dense algebra, embedding
lookup, gating nonlinearities, and the softmax family. There is no
broadcasting: every shape mismatch is an error, which keeps the gradient
code auditable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Array = np.ndarray

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ShapeError(ValueError):
    """An operand does not conform to a primitive's signature."""


class EvaluationError(RuntimeError):
    """A numeric evaluation produced a non-finite value."""


def as_tensor(value) -> Array:
    """Coerce to a float64 ndarray, the value carrier used throughout."""
    return np.asarray(value, dtype=np.float64)


def sigmoid(x: Array) -> Array:
    return 1.0 / (1.0 + np.exp(-x))


def softmax(logits: Array) -> Array:
    """Numerically stable softmax of a 1-d vector."""
    shifted = logits - logits.max()
    exps = np.exp(shifted)
    return exps / exps.sum()


def log_softmax(logits: Array) -> Array:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def entropy(probs: Array) -> float:
    """Shannon entropy -sum(p ln p) in nats; zero-probability terms contribute 0."""
    positive = probs[probs > 0.0]
    return float(-(positive * np.log(positive)).sum())


def _check(ok: bool, kind: str, message: str):
    if not ok:
        raise ShapeError(f"{kind}: {message}")


# --- forward rules ------------------------------------------------------

def _fwd_matmul(vals, aux):
    a, b = vals
    _check(a.ndim == 2 and b.ndim in (1, 2), "matmul",
           f"needs a matrix times a matrix or vector, got {a.shape} @ {b.shape}")
    _check(a.shape[1] == b.shape[0], "matmul",
           f"inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


def _fwd_add(vals, aux):
    a, b = vals
    _check(a.shape == b.shape, "add", f"shapes differ: {a.shape} vs {b.shape}")
    return a + b


def _fwd_mul(vals, aux):
    a, b = vals
    _check(a.shape == b.shape, "mul", f"shapes differ: {a.shape} vs {b.shape}")
    return a * b


def _fwd_scale(vals, aux):
    (a,) = vals
    factor = aux["factor"]
    _check(np.isfinite(factor), "scale", f"factor must be finite, got {factor}")
    return factor * a


def _fwd_concat(vals, aux):
    _check(all(v.ndim == 1 for v in vals), "concat",
           f"only 1-d vectors, got {[v.shape for v in vals]}")
    return np.concatenate(vals)


def _fwd_tanh(vals, aux):
    return np.tanh(vals[0])


def _fwd_sigmoid(vals, aux):
    return sigmoid(vals[0])


def _fwd_lookup(vals, aux):
    (table,) = vals
    row = aux["row"]
    _check(table.ndim == 2, "lookup", f"table must be 2-d, got {table.shape}")
    _check(0 <= row < table.shape[0], "lookup",
           f"row {row} outside table with {table.shape[0]} rows")
    return table[row]


def _fwd_softmax(vals, aux):
    (x,) = vals
    _check(x.ndim == 1 and x.size > 0, "softmax", f"needs a nonempty vector, got {x.shape}")
    return softmax(x)


def _fwd_log_softmax(vals, aux):
    (x,) = vals
    _check(x.ndim == 1 and x.size > 0, "log_softmax", f"needs a nonempty vector, got {x.shape}")
    return log_softmax(x)


def _fwd_nll(vals, aux):
    (logp,) = vals
    index = aux["index"]
    _check(logp.ndim == 1 and logp.size > 0, "nll", f"needs a nonempty vector, got {logp.shape}")
    _check(0 <= index < logp.size, "nll", f"index {index} outside vector of size {logp.size}")
    return np.asarray(-logp[index])


def _fwd_entropy(vals, aux):
    (p,) = vals
    _check(p.ndim == 1 and p.size > 0, "entropy", f"needs a nonempty vector, got {p.shape}")
    return np.asarray(entropy(p))


def _fwd_sum(vals, aux):
    return np.asarray(vals[0].sum())


# --- backward rules (vector-jacobian products) --------------------------

def _vjp_matmul(grad, vals, value, aux):
    a, b = vals
    if b.ndim == 1:
        return np.outer(grad, b), a.T @ grad
    return grad @ b.T, a.T @ grad


def _vjp_add(grad, vals, value, aux):
    return grad, grad


def _vjp_mul(grad, vals, value, aux):
    a, b = vals
    return grad * b, grad * a


def _vjp_scale(grad, vals, value, aux):
    return (aux["factor"] * grad,)


def _vjp_concat(grad, vals, value, aux):
    offsets = np.cumsum([v.size for v in vals])[:-1]
    return tuple(np.split(grad, offsets))


def _vjp_tanh(grad, vals, value, aux):
    return (grad * (1.0 - value * value),)


def _vjp_sigmoid(grad, vals, value, aux):
    return (grad * value * (1.0 - value),)


def _vjp_lookup(grad, vals, value, aux):
    (table,) = vals
    out = np.zeros_like(table)
    out[aux["row"]] = grad
    return (out,)


def _vjp_softmax(grad, vals, value, aux):
    return (value * (grad - (grad * value).sum()),)


def _vjp_log_softmax(grad, vals, value, aux):
    return (grad - np.exp(value) * grad.sum(),)


def _vjp_nll(grad, vals, value, aux):
    (logp,) = vals
    out = np.zeros_like(logp)
    out[aux["index"]] = -grad
    return (out,)


def _vjp_entropy(grad, vals, value, aux):
    (p,) = vals
    safe = np.where(p > 0.0, p, 1.0)
    return (np.where(p > 0.0, -(np.log(safe) + 1.0), 0.0) * grad,)


def _vjp_sum(grad, vals, value, aux):
    return (np.full(vals[0].shape, float(grad)),)


_FORWARD = {
    "matmul": _fwd_matmul,
    "add": _fwd_add,
    "mul": _fwd_mul,
    "scale": _fwd_scale,
    "concat": _fwd_concat,
    "tanh": _fwd_tanh,
    "sigmoid": _fwd_sigmoid,
    "lookup": _fwd_lookup,
    "softmax": _fwd_softmax,
    "log_softmax": _fwd_log_softmax,
    "nll": _fwd_nll,
    "entropy": _fwd_entropy,
    "sum": _fwd_sum,
}

_BACKWARD = {
    "matmul": _vjp_matmul,
    "add": _vjp_add,
    "mul": _vjp_mul,
    "scale": _vjp_scale,
    "concat": _vjp_concat,
    "tanh": _vjp_tanh,
    "sigmoid": _vjp_sigmoid,
    "lookup": _vjp_lookup,
    "softmax": _vjp_softmax,
    "log_softmax": _vjp_log_softmax,
    "nll": _vjp_nll,
    "entropy": _vjp_entropy,
    "sum": _vjp_sum,
}

PRIMITIVES = tuple(_FORWARD)


class Tape:
    """Append-only record of primitive applications.

    Node ids are indices into parallel arrays. Inputs of a node always
    precede it, so a single reverse sweep computes every adjoint.
    """

    __slots__ = ("_kinds", "_inputs", "_aux", "_values", "_params")

    def __init__(self):
        self._kinds: list[str] = []
        self._inputs: list[tuple[int, ...]] = []
        self._aux: list[dict | None] = []
        self._values: list[Array] = []
        self._params: dict[str, int] = {}

    def __len__(self):
        return len(self._kinds)

    def _push(self, kind, inputs, aux, value) -> int:
        if value.size == 0:
            raise ShapeError(f"{kind}: zero-size tensors are not allowed")
        self._kinds.append(kind)
        self._inputs.append(inputs)
        self._aux.append(aux)
        self._values.append(value)
        return len(self._kinds) - 1

    def parameter(self, name: str, value) -> int:
        """Register a named leaf; backward always reports a gradient for it."""
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        node = self._push("param", (), None, as_tensor(value))
        self._params[name] = node
        return node

    def constant(self, value) -> int:
        """A leaf that absorbs no gradient."""
        return self._push("const", (), None, as_tensor(value))

    def value(self, node: int) -> Array:
        return self._values[node]

    def apply(self, kind: str, *inputs: int, **aux) -> int:
        """Record one primitive application and return the result node id."""
        forward = _FORWARD.get(kind)
        if forward is None:
            raise ValueError(f"unknown primitive {kind!r}")
        vals = tuple(self._values[i] for i in inputs)
        value = forward(vals, aux)
        return self._push(kind, inputs, aux or None, as_tensor(value))

    def backward(self, loss: int) -> dict[str, Array]:
        """Gradient of a scalar loss node for every registered parameter.

        Parameters with no path to the loss get exact zeros.
        """
        if self._values[loss].shape != ():
            raise ValueError(
                f"backward needs a scalar loss node, got shape {self._values[loss].shape}")
        adjoint: list[Array | None] = [None] * len(self._kinds)
        adjoint[loss] = np.asarray(1.0)
        for node in range(loss, -1, -1):
            grad = adjoint[node]
            if grad is None:
                continue
            kind = self._kinds[node]
            if kind in ("param", "const"):
                continue
            vals = tuple(self._values[i] for i in self._inputs[node])
            parts = _BACKWARD[kind](grad, vals, self._values[node], self._aux[node])
            for src, part in zip(self._inputs[node], parts):
                current = adjoint[src]
                adjoint[src] = part if current is None else current + part
        return {
            name: adjoint[node] if adjoint[node] is not None
            else np.zeros_like(self._values[node])
            for name, node in self._params.items()
        }


@dataclass
class AdamState:
    """Per-parameter moment estimates for the adaptive update rule."""

    first_moment: dict[str, Array]
    second_moment: dict[str, Array]
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Array]) -> "AdamState":
        return cls(
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
        )


def adam_step(params: dict[str, Array], grads: dict[str, Array], lr: float,
              state: AdamState):
    """One bias-corrected adaptive-moment update, in place.

    Returns the mutated (params, state) pair for call-site convenience.
    """
    if lr <= 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for name, value in params.items():
        if name not in grads:
            raise ValueError(f"missing gradient for parameter {name!r}")
        if grads[name].shape != value.shape:
            raise ShapeError(
                f"gradient shape {grads[name].shape} does not match parameter "
                f"{name!r} with shape {value.shape}")
    state.step += 1
    first_correction = 1.0 - ADAM_BETA1 ** state.step
    second_correction = 1.0 - ADAM_BETA2 ** state.step
    for name, value in params.items():
        grad = grads[name]
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * grad
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (grad * grad)
        value -= lr * (m / first_correction) / (np.sqrt(v / second_correction) + ADAM_EPS)
    return params, state


def finite_difference_check(f, point, h: float = 1e-5) -> float:
    """Worst relative gap between analytic and central-difference gradients.

    ``f`` maps a flat float64 vector to ``(scalar value, gradient vector)``.
    The per-coordinate error is |analytic - central| / max(1e-8,
    |analytic| + |central|); the maximum over coordinates is returned.
    """
    if h <= 0.0:
        raise ValueError(f"step size must be positive, got {h}")
    point = as_tensor(point).copy()
    value, analytic = f(point)
    if not np.isfinite(value):
        raise EvaluationError(f"non-finite value {value} at the base point")
    analytic = as_tensor(analytic)
    worst = 0.0
    for i in range(point.size):
        shifted = point.copy()
        shifted[i] = point[i] + h
        high = f(shifted)[0]
        shifted[i] = point[i] - h
        low = f(shifted)[0]
        if not (np.isfinite(high) and np.isfinite(low)):
            raise EvaluationError(f"non-finite evaluation at coordinate {i}")
        central = (high - low) / (2.0 * h)
        gap = abs(analytic[i] - central) / max(1e-8, abs(analytic[i]) + abs(central))
        worst = max(worst, gap)
    return worst
