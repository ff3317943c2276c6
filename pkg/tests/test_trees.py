import numpy as np
import pytest

from shapenas.trees import BoostedRegressor, RegressionTree


def test_tree_fits_step_function():
    X = np.linspace(0, 1, 40).reshape(-1, 1)
    y = (X[:, 0] > 0.5).astype(float)
    tree = RegressionTree(max_depth=2, min_samples_leaf=2).fit(X, y)
    assert np.allclose(tree.predict(X), y)


def test_tree_respects_depth_and_leaf_means():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(100, 3))
    y = X[:, 0] + 0.2 * rng.normal(size=100)
    tree = RegressionTree(max_depth=3, min_samples_leaf=5).fit(X, y)
    # internal node count of a binary tree of depth d is < 2^d
    assert sum(1 for f in tree.feature if f >= 0) < 2 ** 3
    # a leaf prediction is a mean of targets, hence inside the target range
    pred = tree.predict(X)
    assert pred.min() >= y.min() and pred.max() <= y.max()


def test_boosting_constant_target_is_exact():
    X = np.arange(20, dtype=float).reshape(-1, 1)
    y = np.full(20, 3.25)
    model = BoostedRegressor(rounds=10, learning_rate=0.3).fit(X, y)
    assert np.allclose(model.predict(X), 3.25)


def test_boosting_loss_nonincreasing():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(120, 4))
    y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2 + 0.1 * rng.normal(size=120)
    model = BoostedRegressor(rounds=40, learning_rate=0.1).fit(X, y)
    losses = np.asarray(model.train_losses)
    assert np.all(np.diff(losses) <= 1e-12)


def test_boosting_learns_linear_function():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(300, 2))
    y = 2.0 * X[:, 0] - X[:, 1]
    model = BoostedRegressor(rounds=80, learning_rate=0.2,
                             min_samples_leaf=3).fit(X, y)
    mse = float(np.mean((model.predict(X) - y) ** 2))
    assert mse < 0.01


def test_tree_roundtrip_is_exact():
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(60, 3))
    y = X[:, 0] * X[:, 1]
    model = BoostedRegressor(rounds=15).fit(X, y)
    clone = BoostedRegressor.from_dict(model.to_dict())
    assert np.array_equal(model.predict(X), clone.predict(X))
