"""Coordinate-wise greedy grid search on time-ordered folds."""

import numpy as np
import pytest

from htsdyn.dynamic_disagg.gbt import fit_gbt_arrays
from htsdyn.dynamic_disagg.search import (
    HyperGrid,
    _cell_rmse,
    grid_search,
    time_ordered_folds,
)


class _Set:
    def __init__(self, X, Y):
        self.features = X
        self.targets = Y


def learnable_set(seed=0, n=80):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, size=(n, 3))
    y = (X[:, 0] > 0.5).astype(float) * 0.6 + 0.2
    return _Set(X, y[:, None])


class TestFolds:
    def test_expanding_window(self):
        folds = time_ordered_folds(40, 2)
        assert folds == [(20, 20, 30), (30, 30, 40)]
        for train_end, val_start, val_end in folds:
            assert train_end == val_start
            assert val_end > val_start

    def test_too_few_rows(self):
        with pytest.raises(ValueError, match="not enough rows"):
            time_ordered_folds(3, 2)

    def test_rejects_single_fold(self):
        with pytest.raises(ValueError, match="folds"):
            time_ordered_folds(40, 1)


class TestGridSearch:
    def test_singleton_grid_short_circuits(self):
        tset = learnable_set()
        grid = HyperGrid({"rounds": [25], "max_depth": [2]})
        best, rmse = grid_search(fit_gbt_arrays, tset, grid, folds=2, seed=0)
        assert best == {"rounds": 25, "max_depth": 2}
        assert np.isnan(rmse)

    def test_selected_beats_every_visited_cell(self):
        tset = learnable_set(seed=1)
        grid = HyperGrid(
            {"eta": [0.05, 0.3], "rounds": [10, 60], "max_depth": [1, 3]}
        )
        best, best_rmse = grid_search(fit_gbt_arrays, tset, grid, folds=2, seed=3)
        # re-score every cell the greedy sweep can visit
        visited = []
        current = grid.first_point()
        for name, cands in grid.params.items():
            for cand in cands:
                visited.append({**current, name: cand})
            current[name] = best[name]
        for cell in visited:
            rmse = _cell_rmse(fit_gbt_arrays, tset.features, tset.targets, cell, 2, 3)
            assert best_rmse <= rmse + 1e-12

    def test_deterministic(self):
        tset = learnable_set(seed=2)
        grid = HyperGrid({"eta": [0.1, 0.3], "rounds": [20, 40]})
        b1, r1 = grid_search(fit_gbt_arrays, tset, grid, folds=2, seed=9)
        b2, r2 = grid_search(fit_gbt_arrays, tset, grid, folds=2, seed=9)
        assert b1 == b2 and r1 == r2

    def test_failing_cells_skipped_with_warning(self):
        tset = learnable_set(seed=3)

        def flaky_trainer(X, Y, params, seed):
            if params["rounds"] == 13:
                raise RuntimeError("boom")
            return fit_gbt_arrays(X, Y, params, seed)

        grid = HyperGrid({"rounds": [13, 30]})
        with pytest.warns(RuntimeWarning, match="boom"):
            best, _ = grid_search(flaky_trainer, tset, grid, folds=2, seed=0)
        assert best["rounds"] == 30

    def test_all_cells_failing_errors(self):
        tset = learnable_set(seed=4)

        def broken_trainer(X, Y, params, seed):
            raise RuntimeError("always")

        grid = HyperGrid({"rounds": [10, 20]})
        with pytest.warns(RuntimeWarning):
            with pytest.raises(RuntimeError, match="every grid cell failed"):
                grid_search(broken_trainer, tset, grid, folds=2, seed=0)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError, match="candidate"):
            HyperGrid({"rounds": []})
