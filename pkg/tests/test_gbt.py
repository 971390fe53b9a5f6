"""Boosted-tree training: exact constants, monotone training error, splits."""

import numpy as np
import pytest

from htsdyn.dynamic_disagg.gbt import (
    GbtModel,
    fit_gbt,
    fit_gbt_arrays,
    tree_depth,
)
from htsdyn.dynamic_disagg.search import HyperGrid


def toy_features(n, d=3, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(n, d))


class TestFitGbt:
    def test_constant_target_after_round_one(self):
        X = toy_features(50)
        y = np.full((50, 1), 0.5)
        with pytest.warns(RuntimeWarning, match="constant"):
            model = fit_gbt_arrays(X, y, {"rounds": 1}, seed=0)
        assert np.allclose(model.predict(X), 0.5, atol=1e-9)

    def test_training_rmse_non_increasing_full_sample(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            X = toy_features(80, seed=seed)
            y = np.sin(4 * X[:, 0]) + 0.3 * rng.standard_normal(80)
            model = fit_gbt_arrays(
                X, y, {"rounds": 60, "eta": 0.2, "subsample": 1.0, "colsample": 1.0},
                seed=seed,
            )
            diffs = np.diff(model.train_rmse_path)
            assert (diffs <= 1e-12).all()

    def test_indicator_target_learned(self):
        X = toy_features(200, seed=3)
        median = np.median(X[:, 1])
        y = (X[:, 1] > median).astype(float)
        model = fit_gbt_arrays(
            X, y, {"rounds": 100, "eta": 0.3, "max_depth": 1}, seed=1
        )
        rmse = float(np.sqrt(np.mean((model.predict(X)[:, 0] - y) ** 2)))
        assert rmse < 0.05

    def test_depth_cap_respected(self):
        X = toy_features(100, seed=4)
        y = np.sin(6 * X[:, 0]) * np.cos(5 * X[:, 1])
        model = fit_gbt_arrays(X, y, {"rounds": 10, "max_depth": 2}, seed=2)
        for seq in model.trees:
            for tree in seq:
                assert tree_depth(tree) <= 2

    def test_multi_output_shapes(self):
        X = toy_features(60, seed=5)
        Y = np.column_stack([X[:, 0], 1.0 - X[:, 0]])
        model = fit_gbt_arrays(X, Y, {"rounds": 20}, seed=3)
        assert model.predict(X).shape == (60, 2)

    def test_deterministic_given_seed(self):
        X = toy_features(60, seed=6)
        y = X[:, 0] * 2.0 + np.random.default_rng(0).normal(0, 0.1, 60)
        params = {"rounds": 30, "subsample": 0.7, "colsample": 0.7}
        m1 = fit_gbt_arrays(X, y, params, seed=9)
        m2 = fit_gbt_arrays(X, y, params, seed=9)
        assert np.array_equal(m1.predict(X), m2.predict(X))

    def test_invalid_eta(self):
        with pytest.raises(ValueError, match="eta"):
            fit_gbt_arrays(toy_features(30), np.ones(30), {"eta": 0.0}, seed=0)


def test_fit_gbt_with_grid(monkeypatch):
    rng = np.random.default_rng(7)
    X = toy_features(60, seed=7)
    Y = np.column_stack([X[:, 0] ** 2, 1 - X[:, 0] ** 2]) + 0.05 * rng.standard_normal((60, 2))

    class _Set:
        features = X
        targets = Y

    grid = HyperGrid({"eta": [0.1, 0.3], "rounds": [30], "max_depth": [2]})
    model = fit_gbt(_Set(), grid, seed=4, folds=2)
    assert isinstance(model, GbtModel)
    assert model.rounds == 30
