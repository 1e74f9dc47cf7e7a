"""Tape, primitive, optimizer, and gradient-checker tests."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walknas import (AdamState, EvaluationError, ShapeError, Tape, adam_step,
                     finite_difference_check)
from walknas.autodiff import PRIMITIVES, log_softmax, softmax

from helpers import tape_function


def test_matmul_identity_passes_through():
    tape = Tape()
    eye = tape.constant(np.eye(3))
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (3, 5))
    out = tape.apply("matmul", eye, tape.constant(x))
    assert np.array_equal(tape.value(out), x)


def test_softmax_of_equal_logits_is_exactly_uniform():
    tape = Tape()
    out = tape.apply("softmax", tape.constant(np.zeros(4)))
    assert np.array_equal(tape.value(out), np.full(4, 0.25))


def test_entropy_of_uniform_pair_matches_brute_force():
    tape = Tape()
    probs = tape.apply("softmax", tape.constant(np.zeros(2)))
    ent = tape.apply("entropy", probs)
    brute = -sum(p * math.log(p) for p in tape.value(probs))
    assert float(tape.value(ent)) == pytest.approx(brute, abs=1e-15)
    assert float(tape.value(ent)) == pytest.approx(math.log(2), abs=1e-12)


def test_shape_mismatch_is_rejected_with_shapes():
    tape = Tape()
    a = tape.constant(np.zeros((2, 3)))
    b = tape.constant(np.zeros((2, 3)))
    with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\)"):
        tape.apply("matmul", a, b)
    with pytest.raises(ShapeError, match="add"):
        tape.apply("add", a, tape.constant(np.zeros((3, 2))))


def test_empty_vectors_are_rejected():
    tape = Tape()
    with pytest.raises(ShapeError):
        tape.constant(np.zeros(0))
    with pytest.raises(ShapeError, match="log_softmax"):
        tape.apply("log_softmax", tape.constant(np.zeros((2, 2))))
    with pytest.raises(ShapeError, match="entropy"):
        tape.apply("entropy", tape.constant(np.zeros((2, 2))))


def test_unknown_primitive_rejected():
    tape = Tape()
    with pytest.raises(ValueError, match="unknown primitive"):
        tape.apply("convolve", tape.constant(np.zeros(3)))


def test_backward_of_sum_is_all_ones():
    tape = Tape()
    p = tape.parameter("p", np.random.default_rng(1).uniform(-1, 1, (3, 4)))
    loss = tape.apply("sum", p)
    grads = tape.backward(loss)
    assert np.array_equal(grads["p"], np.ones((3, 4)))


def test_backward_of_zero_scaled_loss_is_exactly_zero():
    tape = Tape()
    p = tape.parameter("p", np.random.default_rng(2).uniform(-1, 1, 5))
    loss = tape.apply("scale", tape.apply("sum", tape.apply("tanh", p)), factor=0.0)
    grads = tape.backward(loss)
    assert np.all(grads["p"] == 0.0)


def test_backward_gives_unreachable_params_exact_zeros():
    tape = Tape()
    used = tape.parameter("used", np.ones(3))
    unused = tape.parameter("unused", np.ones(4))
    loss = tape.apply("sum", used)
    grads = tape.backward(loss)
    assert np.array_equal(grads["used"], np.ones(3))
    assert grads["unused"].shape == (4,)
    assert np.all(grads["unused"] == 0.0)


def test_backward_rejects_non_scalar_loss():
    tape = Tape()
    p = tape.parameter("p", np.ones(3))
    with pytest.raises(ValueError, match="scalar"):
        tape.backward(tape.apply("tanh", p))


def test_backward_is_bitwise_deterministic():
    def run():
        tape = Tape()
        rng = np.random.default_rng(7)
        w = tape.parameter("w", rng.uniform(-1, 1, (4, 3)))
        x = tape.parameter("x", rng.uniform(-1, 1, 3))
        probs = tape.apply("softmax", tape.apply("matmul", w, x))
        loss = tape.apply("entropy", probs)
        return tape.backward(loss)

    first, second = run(), run()
    for name in first:
        assert np.array_equal(first[name], second[name])


def test_duplicate_parameter_name_rejected():
    tape = Tape()
    tape.parameter("p", np.ones(2))
    with pytest.raises(ValueError, match="already registered"):
        tape.parameter("p", np.ones(2))


def test_forward_and_backward_stay_finite():
    tape = Tape()
    rng = np.random.default_rng(11)
    w = tape.parameter("w", rng.uniform(-1, 1, (6, 6)))
    x = tape.parameter("x", rng.uniform(-1, 1, 6))
    h = tape.apply("tanh", tape.apply("matmul", w, x))
    probs = tape.apply("softmax", h)
    loss = tape.apply("add", tape.apply("entropy", probs),
                      tape.apply("nll", tape.apply("log_softmax", h), index=2))
    grads = tape.backward(loss)
    assert np.isfinite(tape.value(loss))
    assert all(np.isfinite(g).all() for g in grads.values())


@given(st.lists(st.floats(min_value=-20, max_value=20), min_size=1, max_size=16))
def test_softmax_is_a_probability_vector(logits):
    probs = softmax(np.array(logits))
    assert np.all(probs >= 0.0)
    assert abs(probs.sum() - 1.0) <= 1e-12


@given(st.lists(st.floats(min_value=-20, max_value=20), min_size=1, max_size=16))
def test_log_softmax_matches_log_of_softmax(logits):
    x = np.array(logits)
    assert np.max(np.abs(log_softmax(x) - np.log(softmax(x)))) <= 1e-10


# --- finite-difference gradient checks -----------------------------------

def _weighted_sum(tape, node, weights):
    return tape.apply("sum", tape.apply("mul", tape.constant(weights), node))


def _fd_case(primitive, rng):
    """(f, point) scalarizing one primitive so every input coordinate
    participates with a well-conditioned gradient."""
    if primitive == "matmul":
        w = rng.uniform(0.5, 1.5, (3, 2))
        builder = lambda t, r: _weighted_sum(t, t.apply("matmul", r["a"], r["b"]), w)
        shapes = {"a": (3, 4), "b": (4, 2)}
    elif primitive == "add":
        w = rng.uniform(0.5, 1.5, 5)
        builder = lambda t, r: _weighted_sum(t, t.apply("add", r["x"], r["y"]), w)
        shapes = {"x": (5,), "y": (5,)}
    elif primitive == "mul":
        w = rng.uniform(0.5, 1.5, 5)
        builder = lambda t, r: _weighted_sum(t, t.apply("mul", r["x"], r["y"]), w)
        shapes = {"x": (5,), "y": (5,)}
    elif primitive == "scale":
        w = rng.uniform(0.5, 1.5, 5)
        builder = lambda t, r: _weighted_sum(t, t.apply("scale", r["x"], factor=1.7), w)
        shapes = {"x": (5,)}
    elif primitive == "concat":
        w = rng.uniform(0.5, 1.5, 7)
        builder = lambda t, r: _weighted_sum(t, t.apply("concat", r["x"], r["y"]), w)
        shapes = {"x": (3,), "y": (4,)}
    elif primitive in ("tanh", "sigmoid"):
        w = rng.uniform(0.5, 1.5, 6)
        builder = lambda t, r: _weighted_sum(t, t.apply(primitive, r["x"]), w)
        shapes = {"x": (6,)}
    elif primitive == "lookup":
        w = rng.uniform(0.5, 1.5, 4)
        builder = lambda t, r: _weighted_sum(t, t.apply("lookup", r["table"], row=2), w)
        shapes = {"table": (5, 4)}
    elif primitive in ("softmax", "log_softmax"):
        w = rng.uniform(0.5, 1.5, 6)
        builder = lambda t, r: _weighted_sum(t, t.apply(primitive, r["x"]), w)
        shapes = {"x": (6,)}
    elif primitive == "nll":
        builder = lambda t, r: t.apply("nll", t.apply("log_softmax", r["x"]), index=1)
        shapes = {"x": (6,)}
    elif primitive == "entropy":
        builder = lambda t, r: t.apply("entropy", t.apply("softmax", r["x"]))
        shapes = {"x": (6,)}
    elif primitive == "sum":
        builder = lambda t, r: t.apply("scale", t.apply("sum", r["x"]), factor=1.3)
        shapes = {"x": (2, 3)}
    else:
        raise AssertionError(f"no finite-difference case for {primitive!r}")
    f, size = tape_function(builder, shapes)
    return f, rng.uniform(-1.0, 1.0, size)


@pytest.mark.parametrize("primitive", PRIMITIVES)
@pytest.mark.parametrize("seed", range(5))
def test_primitive_gradients_match_central_differences(primitive, seed):
    f, point = _fd_case(primitive, np.random.default_rng(seed))
    assert finite_difference_check(f, point, h=1e-5) < 1e-4


def test_quadratic_is_exact_for_central_differences():
    def f(vec):
        return 0.5 * float(vec @ vec), vec.copy()

    rng = np.random.default_rng(3)
    point = rng.uniform(0.25, 1.0, 8) * rng.choice([-1.0, 1.0], 8)
    # any h is exact for a quadratic; a large one suppresses roundoff
    assert finite_difference_check(f, point, h=1e-2) < 1e-8


def test_constant_function_has_zero_error():
    def f(vec):
        return 3.5, np.zeros_like(vec)

    assert finite_difference_check(f, np.ones(4), h=1e-5) == 0.0


def test_non_finite_evaluation_is_reported_with_coordinate():
    def f(vec):
        if vec[0] != 1.0:
            return float("inf"), np.zeros_like(vec)
        return 1.0, np.zeros_like(vec)

    with pytest.raises(EvaluationError, match="coordinate 0"):
        finite_difference_check(f, np.ones(3), h=1e-5)


def test_fd_check_rejects_bad_step():
    with pytest.raises(ValueError, match="step size"):
        finite_difference_check(lambda v: (0.0, v), np.ones(2), h=0.0)


# --- the adaptive-moment updater ------------------------------------------

def test_adam_zero_gradient_leaves_params_unchanged():
    params = {"w": np.array([0.3, -0.2, 1.5])}
    grads = {"w": np.zeros(3)}
    state = AdamState.for_params(params)
    before = params["w"].copy()
    adam_step(params, grads, lr=0.01, state=state)
    assert np.array_equal(params["w"], before)
    assert np.all(state.second_moment["w"] >= 0.0)
    assert state.step == 1


def test_adam_first_step_magnitude_is_about_lr():
    rng = np.random.default_rng(5)
    params = {"w": rng.uniform(-1, 1, (4, 3))}
    grad = rng.uniform(0.5, 2.0, (4, 3)) * rng.choice([-1.0, 1.0], (4, 3))
    state = AdamState.for_params(params)
    before = params["w"].copy()
    adam_step(params, {"w": grad}, lr=0.01, state=state)
    delta = params["w"] - before
    # bias correction makes mhat/sqrt(vhat) ~ sign(g) on the first step
    assert np.allclose(np.abs(delta), 0.01, rtol=1e-6)
    assert np.all(np.sign(delta) == -np.sign(grad))


def test_adam_step_counter_increments_once_per_call():
    params = {"w": np.ones(2)}
    state = AdamState.for_params(params)
    adam_step(params, {"w": np.full(2, 0.1)}, lr=0.001, state=state)
    adam_step(params, {"w": np.full(2, 0.1)}, lr=0.001, state=state)
    assert state.step == 2


def test_adam_rejects_shape_mismatch_and_missing_grads():
    params = {"w": np.ones(3)}
    state = AdamState.for_params(params)
    with pytest.raises(ShapeError):
        adam_step(params, {"w": np.ones(4)}, lr=0.01, state=state)
    with pytest.raises(ValueError, match="missing gradient"):
        adam_step(params, {}, lr=0.01, state=state)
    with pytest.raises(ValueError, match="learning rate"):
        adam_step(params, {"w": np.ones(3)}, lr=0.0, state=state)
