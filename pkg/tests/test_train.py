import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moedist.distributions import Laplace, Normal, Poisson
from moedist.exceptions import DataError, NonFiniteLossError, SpecError
from moedist.mixture import Component, MixtureSpec, assemble, penalized_nll
from moedist.train import (SGD, Adam, EarlyStopping, OptimizerConfig, RMSprop, TrainConfig,
                           grad_nll, loss_and_grad, split_validation, train)
from oracles import central_difference


def regression_data(n=200, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 10, n)
    return {"x": x, "z": rng.normal(size=n)}, 1.0 + 0.5 * x + rng.normal(size=n)


def test_optimizer_examples():
    theta = np.array([1.0])
    SGD(0.1).step(theta, np.array([2.0]))
    assert theta[0] == pytest.approx(0.8, abs=1e-15)
    theta = np.array([0.0])
    Adam(0.001).step(theta, np.array([0.5]))
    assert theta[0] == pytest.approx(-0.001 * 0.5 / (0.5 + 1e-7), rel=1e-12)
    assert -0.001 < theta[0] < -0.000999
    theta = np.array([0.0])
    RMSprop(0.01).step(theta, np.array([1.0]))
    assert theta[0] == pytest.approx(-0.031623, abs=1e-6)


def test_optimizer_config_validation():
    with pytest.raises(SpecError):
        OptimizerConfig("lbfgs")
    with pytest.raises(SpecError):
        OptimizerConfig("adam", lr=0.0)
    with pytest.raises(SpecError):
        TrainConfig(batch_size=0)
    with pytest.raises(SpecError):
        TrainConfig(validation_split=1.0)
    cfg = TrainConfig(OptimizerConfig("adam", 0.001), epochs=7, seed=3)
    assert TrainConfig.from_json(cfg.to_json()) == cfg


def test_split_sizes_and_determinism():
    tr, va = split_validation(1000, 0.1, 42)
    assert (tr.size, va.size) == (900, 100)
    assert np.intersect1d(tr, va).size == 0
    np.testing.assert_array_equal(np.union1d(tr, va), np.arange(1000))
    tr2, va2 = split_validation(1000, 0.1, 42)
    np.testing.assert_array_equal(va, va2)
    assert not np.array_equal(va, split_validation(1000, 0.1, 43)[1])
    with pytest.raises(DataError):
        split_validation(0, 0.1, 0)


def test_early_stopping_example():
    stop = EarlyStopping(patience=1)
    flags = [stop.update(e, v) for e, v in enumerate([3.0, 2.0, 2.5], start=1)]
    assert flags == [False, False, True]
    assert stop.best_epoch == 2 and stop.best == 2.0


def test_gradient_vanishes_at_closed_form_mle():
    _, y = regression_data()
    model = assemble(MixtureSpec([Component(Normal(), ["~1", "~1"])]), {}, y)
    scale = model.predictor(1, "scale")
    model.set_coefficients(model.predictor(1, "mean"), [y.mean()])
    model.set_coefficients(scale, [float(scale.transform.inverse(y.std()))])
    assert np.max(np.abs(grad_nll(model))) < 1e-6


@pytest.mark.parametrize("seed", range(4))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    data, y = regression_data(40, seed)
    spec = MixtureSpec([
        Component(Normal(), ["~1+x+s(z,k=6,lambda=0.3)", "~1+lasso(x,lambda=0.2)"]),
        Component(Laplace(), ["~1+d(x,z)", "~1+z"]),
    ], gating="~1+x", networks={"d": [{"units": 5, "activation": "softplus"}, {"units": 1}]})
    model = assemble(spec, data, y, seed=seed)
    model.theta[:] += rng.normal(scale=0.3, size=model.n_params)

    def f(t):
        model.theta[:] = t
        return penalized_nll(model)

    theta0 = model.theta.copy()
    fd = central_difference(f, theta0, h=1e-6)
    model.theta[:] = theta0
    np.testing.assert_allclose(grad_nll(model), fd, rtol=1e-5, atol=1e-6)


def test_full_batch_sgd_is_monotone():
    data, y = regression_data()
    model = assemble(MixtureSpec([Component(Normal(), ["~1+x", "~1"])]), data, y)
    cfg = TrainConfig(OptimizerConfig("sgd", 0.01), epochs=50, batch_size=1000,
                      validation_split=0.0, early_stopping=False)
    _, hist = train(model, cfg)
    assert np.all(np.diff(hist.train_loss) <= 1e-12)
    assert hist.best_epoch == 50


def test_best_epoch_is_restored():
    data, y = regression_data()
    model = assemble(MixtureSpec([Component(Normal(), ["~1+x", "~1"])] * 2), data, y)
    cfg = TrainConfig(OptimizerConfig("rmsprop", 0.05), epochs=60, patience=5, seed=1)
    model, hist = train(model, cfg)
    _, val = split_validation(200, 0.1, 1)
    assert penalized_nll(model, val) == min(hist.val_loss)
    assert hist.val_loss[hist.best_epoch - 1] == min(hist.val_loss)
    assert hist.stopped_epoch == len(hist.val_loss)
    assert hist.stopped_epoch >= hist.best_epoch
    if hist.stopped_epoch < 60:
        assert hist.stopped_epoch - hist.best_epoch == 5


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 50))
def test_batch_losses_average_to_full_loss(bs):
    data, y = regression_data(60)
    model = assemble(MixtureSpec([Component(Normal(), ["~1+x", "~1"])] * 2), data, y)
    rows = np.arange(60)
    parts = [(penalized_nll(model, rows[i:i + bs]), len(rows[i:i + bs]))
             for i in range(0, 60, bs)]
    weighted = sum(l * k for l, k in parts) / 60
    assert weighted == pytest.approx(penalized_nll(model), rel=1e-12)


def test_training_is_deterministic():
    data, y = regression_data()
    spec = MixtureSpec([Component(Normal(), ["~1+x+d(x)", "~1"])] * 2,
                       networks={"d": [{"units": 8, "activation": "relu"}, {"units": 1}]})
    cfg = TrainConfig(epochs=5, seed=9)
    a, ha = train(assemble(spec, data, y, seed=9), cfg)
    b, hb = train(assemble(spec, data, y, seed=9), cfg)
    np.testing.assert_array_equal(a.theta, b.theta)
    assert ha.val_loss == hb.val_loss
    c, _ = train(assemble(spec, data, y, seed=9), TrainConfig(epochs=5, seed=10))
    assert not np.array_equal(a.theta, c.theta)


def test_non_finite_loss_reports_epoch_and_batch():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 10, 100)
    y = rng.poisson(np.exp(0.3 * x)).astype(float)
    model = assemble(MixtureSpec([Component(Poisson(), ["~1+x"])]), {"x": x}, y)
    with pytest.raises(NonFiniteLossError) as info:
        train(model, TrainConfig(OptimizerConfig("sgd", 10.0), epochs=5, batch_size=10))
    assert info.value.epoch == 1 and info.value.batch >= 1


def test_unbound_model_and_empty_batch():
    data, y = regression_data(10)
    model = assemble(MixtureSpec([Component(Normal(), ["~1", "~1"])]), data, y)
    with pytest.raises(DataError):
        loss_and_grad(model, np.array([], dtype=int))
    model.design = None
    with pytest.raises(DataError):
        train(model)


def test_history_metadata():
    data, y = regression_data()
    model = assemble(MixtureSpec([Component(Normal(), ["~1+x", "~1"])]), data, y)
    _, hist = train(model, TrainConfig(epochs=2))
    assert hist.metadata["n_train"] == 180 and hist.metadata["n_val"] == 20
    assert hist.metadata["optimizer"]["name"] == "rmsprop"
    assert math.isfinite(hist.train_loss[-1])


def test_intercept_only_full_batch_sgd_is_monotone():
    _, y = regression_data()
    model = assemble(MixtureSpec([Component(Normal(), ["~1", "~1"])]), {}, y)
    cfg = TrainConfig(OptimizerConfig("sgd", 0.001), epochs=100, batch_size=200,
                      validation_split=0.0, early_stopping=False)
    _, hist = train(model, cfg)
    assert np.all(np.diff(hist.train_loss) <= 1e-12)


def test_full_batch_loss_equals_objective():
    data, y = regression_data()
    spec = MixtureSpec([Component(Normal(), ["~1+s(x,k=6)", "~1+lasso(z,lambda=0.3)"])] * 2)
    model = assemble(spec, data, y)
    model.theta[:] += np.random.default_rng(0).normal(scale=0.1, size=model.n_params)
    assert loss_and_grad(model, np.arange(200))[0] == penalized_nll(model)
