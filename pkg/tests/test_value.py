import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadnpg.mlp import Mlp, batch_forward
from quadnpg.sim import DivergenceError
from quadnpg.value import ValueFitConfig, fit_value


def test_matched_targets_stop_after_one_step():
    rng = np.random.default_rng(0)
    net = Mlp.init_random([4, 8, 1], rng, zero_output=False)
    X = rng.standard_normal((30, 4))
    res = fit_value(net, X, batch_forward(net, X)[:, 0])
    assert res.iterations == 1
    assert res.loss < 1e-4
    assert np.array_equal(res.value.params(), net.params())


@given(st.floats(-2.0, 2.0).filter(lambda x: abs(x) > 0.05), st.floats(-1.0, 1.0))
@settings(max_examples=25, deadline=None)
def test_single_sample_linear_fit(x, y):
    # the default 1e-3 step moves each weight by at most ~0.2 in 200 steps; use a larger one
    cfg = ValueFitConfig(step_size=0.02, loss_threshold=1e-5)
    res = fit_value(Mlp([1, 1]), np.array([[x]]), np.array([y]), cfg)
    w, b = res.value.params()
    assert res.iterations <= 200
    assert abs(w * x + b - y) < 0.01
    # any exact least-squares solution interpolates the point; compare with the min-norm one
    w_ls, b_ls = y * x / (x * x + 1), y / (x * x + 1)
    assert abs((w * x + b) - (w_ls * x + b_ls)) < 0.01


def test_loss_history_non_increasing():
    rng = np.random.default_rng(1)
    net = Mlp.init_random([6, 16, 16, 1], rng)
    X = rng.standard_normal((200, 6))
    y = np.sin(X[:, 0]) + 3.0 * X[:, 1] ** 2  # some targets in the linear Huber regime
    res = fit_value(net, X, y, ValueFitConfig(step_size=0.05, max_iterations=150))
    h = np.array(res.history)
    assert np.all(np.diff(h) <= 0)
    assert h[-1] < h[0]
    assert len(h) == res.iterations + 1


def test_stops_below_threshold():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((50, 3))
    y = X @ np.array([0.1, -0.2, 0.05])
    res = fit_value(Mlp([3, 1]), X, y, ValueFitConfig(step_size=0.01, max_iterations=200, loss_threshold=1e-4))
    assert res.loss < 1e-4
    assert res.iterations < 200


def test_input_not_modified():
    rng = np.random.default_rng(3)
    net = Mlp.init_random([3, 4, 1], rng)
    before = net.params().copy()
    fit_value(net, rng.standard_normal((10, 3)), rng.standard_normal(10))
    assert np.array_equal(net.params(), before)


def test_non_finite_targets_abort():
    with pytest.raises(DivergenceError):
        fit_value(Mlp([2, 1]), np.zeros((3, 2)), np.array([0.0, np.nan, 1.0]))


def test_empty_samples_rejected():
    with pytest.raises(ValueError):
        fit_value(Mlp([2, 1]), np.zeros((0, 2)), np.zeros(0))


def test_subsample_cap_is_deterministic():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((500, 3))
    y = rng.standard_normal(500)
    cfg = ValueFitConfig(max_samples=100, max_iterations=5)
    a = fit_value(Mlp([3, 1]), X, y, cfg, np.random.default_rng(9))
    b = fit_value(Mlp([3, 1]), X, y, cfg, np.random.default_rng(9))
    assert np.array_equal(a.value.params(), b.value.params())


def test_config_validation():
    with pytest.raises(ValueError):
        ValueFitConfig(max_iterations=0)
    with pytest.raises(ValueError):
        ValueFitConfig(loss_threshold=0.0)
