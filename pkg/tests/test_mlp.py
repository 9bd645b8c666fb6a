import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import blobs
from oracles import central_difference_grad
from vibrofdd.mlp import MlpModel, forward, lbfgs_train, loss_and_grad, predict

GRAD_FLOOR = 1e-5


def gradient_check_error(seed: int) -> float:
    """Max relative error of the analytic gradient against central differences."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 8))
    model = MlpModel.glorot(d, rng)
    x = rng.standard_normal((10, d))
    y = rng.integers(0, 3, 10)
    theta = model.get_params()
    _, g = loss_and_grad(model, x, y)
    fd = central_difference_grad(lambda t: loss_and_grad(model.with_params(t), x, y)[0], theta, 1e-5)
    return float(np.max(np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), GRAD_FLOOR)))


def test_gradient_check_single():
    assert gradient_check_error(0) < 1e-5


def test_zero_model_uniform_and_ln3():
    m = MlpModel.zeros(4)
    x = np.random.default_rng(0).standard_normal((5, 4))
    assert np.allclose(forward(m, x[0]), 1 / 3)
    assert np.allclose(m.predict_proba(x), 1 / 3)
    loss, _ = loss_and_grad(m, x, np.array([0, 1, 2, 0, 1]))
    assert loss == pytest.approx(np.log(3), abs=1e-12)
    assert predict(m, x[0]) == 0


def test_output_bias_shift_invariant():
    rng = np.random.default_rng(1)
    m = MlpModel.glorot(3, rng)
    x = rng.standard_normal((7, 3))
    p = m.predict_proba(x)
    m.biases[-1] = m.biases[-1] + 17.0
    assert np.max(np.abs(m.predict_proba(x) - p)) < 1e-12


def _saturated(target: int) -> MlpModel:
    m = MlpModel.zeros(2)
    m.biases[-1] = np.full(3, -50.0)
    m.biases[-1][target] = 50.0
    return m


def test_saturated_logit():
    p = forward(_saturated(1), np.zeros(2))
    assert p[1] > 1 - 1e-9


def test_confident_correct_loss_near_zero():
    loss, _ = loss_and_grad(_saturated(2), np.zeros((4, 2)), np.full(4, 2))
    assert loss < 1e-6


def test_blobs_train_and_center():
    x, y, centers = blobs(seed=5)
    m = lbfgs_train(x, y, 200, seed=0)
    assert np.mean(m.predict(x) == y) >= 0.99
    assert list(m.predict(centers)) == [0, 1, 2]


def test_zero_iterations_returns_init():
    x, y, _ = blobs()
    m = lbfgs_train(x, y, 0, seed=3)
    init = MlpModel.glorot(2, np.random.Generator(np.random.PCG64(3)))
    assert np.array_equal(m.get_params(), init.get_params())


def test_loss_history_non_increasing():
    x, y, _ = blobs(spread=1.2, seed=8)
    m = lbfgs_train(x, y, 100, seed=1)
    h = np.array(m.loss_history)
    assert np.all(np.diff(h) <= 0)


def test_training_bit_identical():
    x, y, _ = blobs(seed=9)
    a = lbfgs_train(x, y, 50, seed=4)
    b = lbfgs_train(x, y, 50, seed=4)
    assert np.array_equal(a.get_params(), b.get_params())


def test_predict_is_argmax():
    rng = np.random.default_rng(2)
    m = MlpModel.glorot(5, rng)
    x = rng.standard_normal((100, 5)) * 3
    assert np.array_equal(m.predict(x), [int(np.argmax(forward(m, row))) for row in x])
    assert all(predict(m, row) == int(np.argmax(forward(m, row))) for row in x)


def test_shapes_and_finiteness():
    m = MlpModel.glorot(18, np.random.default_rng(0))
    assert m.sizes == (18, 25, 25, 3)
    assert [w.shape for w in m.weights] == [(18, 25), (25, 25), (25, 3)]
    assert all(np.all(np.isfinite(w)) for w in m.weights)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_softmax_normalized(seed, scale):
    rng = np.random.default_rng(seed)
    m = MlpModel.glorot(4, rng)
    p = m.predict_proba(scale * rng.standard_normal((6, 4)))
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-9)
    assert np.all(p > 0)
