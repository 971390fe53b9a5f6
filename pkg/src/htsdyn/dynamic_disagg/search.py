"""Coordinate-wise greedy hyperparameter search on time-ordered folds.

One sweep over the parameters in grid order: each parameter is optimized
over its candidates while the others stay at the current best, scored by
mean validation RMSE over expanding-window folds (earlier rows train, later
rows validate).  Ties keep the earlier candidate.
"""

from __future__ import annotations

import json
import warnings
import zlib
from dataclasses import dataclass

import numpy as np

PAPER_GBT_GRID_SPEC = {
    "eta": [round(0.01 * k, 2) for k in range(1, 6)],
    "subsample": [round(0.3 + 0.1 * k, 1) for k in range(8)],
    "colsample": [round(0.3 + 0.1 * k, 1) for k in range(8)],
    "rounds": [100, 200, 300, 400, 500],
    "max_depth": list(range(2, 11)),
}

PAPER_MLP_GRID_SPEC = {
    "hidden": [1, 11, 21, 31, 41],
    "decay": [0.0, 0.1, 0.2, 0.3],
    "activation": ["linear", "sigmoid"],
}

# gamma and C floors raised off zero, where both parameters degenerate
PAPER_SVR_GRID_SPEC = {
    "kernel": ["linear", "poly", "rbf"],
    "gamma": [round(0.1 * k, 1) for k in range(1, 11)],
    "C": [float(k) for k in range(1, 101)],
}

DEFAULT_GBT_GRID_SPEC = {"eta": [0.05, 0.1], "rounds": [100, 200], "max_depth": [2, 3]}
DEFAULT_MLP_GRID_SPEC = {"hidden": [4, 8], "decay": [0.0, 0.1]}
DEFAULT_SVR_GRID_SPEC = {"kernel": ["rbf", "linear"], "gamma": [0.1, 0.5, 1.0], "C": [1.0, 10.0, 100.0]}


@dataclass(frozen=True)
class HyperGrid:
    """Ordered candidate lists per parameter name."""

    params: dict

    def __post_init__(self):
        if not self.params or any(len(v) == 0 for v in self.params.values()):
            raise ValueError("every grid must list at least one candidate")

    @property
    def n_cells(self) -> int:
        out = 1
        for v in self.params.values():
            out *= len(v)
        return out

    def first_point(self) -> dict:
        return {k: v[0] for k, v in self.params.items()}


def time_ordered_folds(n_rows: int, folds: int):
    """Expanding-window (train_end, val_start, val_end) index triples."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    block = max(1, n_rows // (2 * folds))
    out = []
    for f in range(folds, 0, -1):
        val_start = n_rows - f * block
        if val_start < 2:
            raise ValueError(f"not enough rows ({n_rows}) for {folds} folds")
        out.append((val_start, val_start, val_start + block))
    return out


def _cell_seed(seed: int, params: dict) -> int:
    canonical = json.dumps(params, sort_keys=True, default=str)
    return int(np.uint32(seed) ^ zlib.crc32(canonical.encode()))


def _cell_rmse(trainer, X, Y, params, folds, seed) -> float:
    scores = []
    for train_end, val_start, val_end in time_ordered_folds(X.shape[0], folds):
        model = trainer(X[:train_end], Y[:train_end], params, _cell_seed(seed, params))
        pred = model.predict(X[val_start:val_end])
        scores.append(float(np.sqrt(np.mean((pred - Y[val_start:val_end]) ** 2))))
    return float(np.mean(scores))


def grid_search(trainer, training_set, grid: HyperGrid, folds: int, seed: int):
    """Greedy sweep; returns (best_params, best_validation_rmse).

    ``trainer(features, targets, params, seed)`` must return a model with a
    ``predict`` method.  Failing cells are skipped with a warning; if every
    visited cell fails the search raises.
    """
    X, Y = training_set.features, training_set.targets
    current = grid.first_point()
    if grid.n_cells == 1:
        return current, float("nan")

    best_rmse = None
    any_success = False
    for name, candidates in grid.params.items():
        best_candidate = None
        best_candidate_rmse = np.inf
        for cand in candidates:
            trial = {**current, name: cand}
            try:
                rmse = _cell_rmse(trainer, X, Y, trial, folds, seed)
            except Exception as exc:  # cell isolation: one bad fit won't void the sweep
                warnings.warn(
                    f"grid cell {trial} failed: {exc}", RuntimeWarning
                )
                continue
            any_success = True
            if rmse < best_candidate_rmse:
                best_candidate_rmse = rmse
                best_candidate = cand
        if best_candidate is not None:
            current[name] = best_candidate
            best_rmse = best_candidate_rmse
    if not any_success:
        raise RuntimeError("every grid cell failed during the search")
    return current, float(best_rmse)
