"""
Tests d'Adam et de l'écrêtage des gradients.
"""

import numpy as np
import pytest

from app.core.exceptions import ShapeError
from app.core.optim import AdamState, adam_step, clip_grad_norm, global_grad_norm
from app.core.tensor import Tensor


def param(values) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


def test_first_step_moves_by_lr():
    p = {"w": param([1.0])}
    state = AdamState(lr=0.1, eps=0.0)
    adam_step(p, {"w": np.array([1.0])}, state)
    assert p["w"].data[0] == pytest.approx(0.9, abs=1e-12)
    assert state.step_count == 1


def test_zero_gradient_leaves_parameter():
    p = {"w": param([1.5, -2.0])}
    state = AdamState(lr=0.1)
    for _ in range(5):
        adam_step(p, {"w": np.zeros(2)}, state)
    np.testing.assert_array_equal(p["w"].data, [1.5, -2.0])


def test_twin_parameters_stay_identical():
    p = {"a": param([0.3, 0.7]), "b": param([0.3, 0.7])}
    state = AdamState(lr=0.05)
    rng = np.random.default_rng(0)
    for _ in range(50):
        g = rng.normal(size=2)
        adam_step(p, {"a": g, "b": g.copy()}, state)
    np.testing.assert_array_equal(p["a"].data, p["b"].data)
    assert np.all(state.v["a"] >= 0)


def test_gradient_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step({"w": param([1.0, 2.0])}, {"w": np.zeros(3)}, AdamState())


def test_moment_shape_mismatch():
    state = AdamState()
    state.m["w"] = np.zeros(3)
    state.v["w"] = np.zeros(3)
    with pytest.raises(ShapeError):
        adam_step({"w": param([1.0, 2.0])}, {"w": np.zeros(2)}, state)


def test_minimizes_quadratic():
    w = param([3.0, -4.0])
    state = AdamState(lr=0.1)
    for _ in range(300):
        w.zero_grad()
        (w * w).sum().backward()
        adam_step({"w": w}, {"w": w.grad}, state)
    assert np.all(np.abs(w.data) < 0.05)


def test_clip_grad_norm():
    a, b = param([0.0]), param([0.0, 0.0])
    a.grad[:] = [3.0]
    b.grad[:] = [4.0, 0.0]
    params = {"a": a, "b": b}
    assert clip_grad_norm(params, 1.0) == pytest.approx(5.0)
    assert global_grad_norm(params) == pytest.approx(1.0, rel=1e-9)


def test_clip_grad_norm_below_threshold():
    a = param([0.0])
    a.grad[:] = [0.5]
    clip_grad_norm({"a": a}, 1.0)
    assert a.grad[0] == 0.5
