import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pregrasp.nn import (
    AdamState,
    InvalidLayout,
    MlpParams,
    NonFiniteGradient,
    ShapeMismatch,
    adam_step,
    mlp_backward,
    mlp_forward,
    mlp_init,
    mlp_layout,
    polyak_update,
)


def test_layout_and_parameter_count():
    assert mlp_layout(7, 6) == (7, 64, 64, 6)
    p = MlpParams((7, 64, 64, 6))
    assert p.flat.size == 7 * 64 + 64 + 64 * 64 + 64 + 64 * 6 + 6
    assert p.shapes == [(7, 64), (64,), (64, 64), (64,), (64, 6), (6,)]


@pytest.mark.parametrize("sizes", [(7,), (7, 0, 3), (3, -1)])
def test_invalid_layout(sizes):
    with pytest.raises(InvalidLayout):
        MlpParams(sizes)


def test_init_is_deterministic_and_fan_in_scaled():
    a = mlp_init((7, 64, 64, 6), np.random.default_rng(0))
    b = mlp_init((7, 64, 64, 6), np.random.default_rng(0))
    assert a == b
    big = mlp_init((400, 400, 1), np.random.default_rng(1))
    assert np.var(big.weights[0]) == pytest.approx(1 / 400, rel=0.02)
    assert np.all(big.biases[0] == 0)


def test_zero_params_give_zero_output():
    y, _ = mlp_forward(MlpParams((7, 64, 64, 6)), np.ones(7))
    assert np.array_equal(y, np.zeros(6))


def test_hand_computed_forward():
    # 1 -> 1 -> 1: y = w2 * tanh(w1 x + b1) + b2
    p = MlpParams((1, 1, 1), np.array([0.5, 0.1, 2.0, -0.3]))
    y, _ = mlp_forward(p, np.array([0.8]))
    assert y[0] == pytest.approx(2.0 * math.tanh(0.5 * 0.8 + 0.1) - 0.3, abs=1e-15)


def test_batch_matches_single_rows():
    p = mlp_init((5, 8, 3), np.random.default_rng(2))
    x = np.random.default_rng(3).normal(size=(4, 5))
    yb, _ = mlp_forward(p, x)
    for i in range(4):
        assert np.allclose(mlp_forward(p, x[i])[0], yb[i], atol=1e-15)


def test_hand_computed_backward():
    p = MlpParams((1, 1, 1), np.array([0.5, 0.1, 2.0, -0.3]))
    x = 0.8
    _, cache = mlp_forward(p, np.array([x]))
    g, gx = mlp_backward(p, cache, np.array([1.0]))
    h = math.tanh(0.5 * x + 0.1)
    dz = 2.0 * (1 - h * h)
    assert g.flat == pytest.approx([dz * x, dz, h, 1.0], abs=1e-15)
    assert gx[0] == pytest.approx(dz * 0.5, abs=1e-15)


def test_input_width_mismatch():
    with pytest.raises(ShapeMismatch):
        mlp_forward(MlpParams((3, 4, 1)), np.ones(2))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = mlp_init((4, 6, 5, 3), rng)
    x = rng.normal(size=(3, 4))
    c = rng.normal(size=(3, 3))
    _, cache = mlp_forward(p, x)
    g, gx = mlp_backward(p, cache, c)

    def f():
        return float(np.sum(mlp_forward(p, x)[0] * c))

    h = 1e-5
    for i in rng.choice(p.flat.size, 10, replace=False):
        v = p.flat[i]
        p.flat[i] = v + h
        up = f()
        p.flat[i] = v - h
        down = f()
        p.flat[i] = v
        num = (up - down) / (2 * h)
        assert abs(num - g.flat[i]) <= 1e-6 * max(1.0, abs(num))
    dx = rng.normal(size=x.shape)
    x0 = x.copy()
    x[:] = x0 + h * dx
    up = f()
    x[:] = x0 - h * dx
    down = f()
    x[:] = x0
    assert (up - down) / (2 * h) == pytest.approx(float(np.sum(gx * dx)), rel=1e-6, abs=1e-9)


def test_first_adam_step_is_learning_rate_sized():
    p = MlpParams((1, 1), np.array([1.0, 0.0]))
    g = MlpParams((1, 1), np.array([0.3, -7.0]))
    new, state = adam_step(AdamState.zeros(2), p, g, 1e-3)
    assert new.flat == pytest.approx([1.0 - 1e-3, 1e-3], abs=1e-9)
    assert state.step == 1
    assert p.flat.tolist() == [1.0, 0.0]


def test_adam_rejects_non_finite():
    p = MlpParams((1, 1))
    with pytest.raises(NonFiniteGradient):
        adam_step(AdamState.zeros(2), p, MlpParams((1, 1), np.array([np.nan, 0.0])), 1e-3)


def test_adam_minimizes_quadratic():
    p = MlpParams((1, 1), np.array([3.0, -2.0]))
    state = AdamState.zeros(2)
    for _ in range(5000):
        p, state = adam_step(state, p, MlpParams((1, 1), 2 * p.flat), 1e-2)
    assert np.all(np.abs(p.flat) < 1e-2)


@pytest.mark.parametrize("target, online, tau, expected", [
    (0.0, 1.0, 0.995, 0.005), (0.005, 1.0, 0.995, 0.009975), (0.4, 1.0, 1.0, 0.4)])
def test_polyak_examples(target, online, tau, expected):
    t = MlpParams((1, 1), np.array([target, target]))
    polyak_update(t, MlpParams((1, 1), np.array([online, online])), tau)
    assert t.flat == pytest.approx([expected, expected], abs=1e-15)


@settings(max_examples=50)
@given(tau=st.floats(0, 1), a=st.floats(-10, 10), b=st.floats(-10, 10))
def test_polyak_stays_between(tau, a, b):
    t = MlpParams((1, 1), np.array([a, a]))
    polyak_update(t, MlpParams((1, 1), np.array([b, b])), tau)
    assert min(a, b) - 1e-12 <= t.flat[0] <= max(a, b) + 1e-12
