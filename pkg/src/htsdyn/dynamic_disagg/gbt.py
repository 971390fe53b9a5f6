"""Gradient-boosted regression trees on squared loss, from scratch.

Each boosting round fits a depth-limited tree to the current residuals on a
row subsample; leaf values are residual means, scaled into the ensemble by
the learning rate.  Multi-output targets get one tree sequence per output
inside a single model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_GBT_PARAMS = {
    "eta": 0.1,
    "rounds": 100,
    "max_depth": 3,
    "subsample": 1.0,
    "colsample": 1.0,
}


def _best_split(X: np.ndarray, y: np.ndarray, feature_idx: np.ndarray):
    """Best axis-aligned split by SSE reduction; None when nothing helps."""
    n = len(y)
    if n < 2:
        return None
    total = y.sum()
    parent_score = total * total / n
    best_gain = 1e-12  # require a strictly positive reduction
    best = None
    counts = np.arange(1, n)
    for f in feature_idx:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        valid = xs[1:] != xs[:-1]
        if not valid.any():
            continue
        left_sum = np.cumsum(y[order])[:-1]
        right_sum = total - left_sum
        score = left_sum**2 / counts + right_sum**2 / (n - counts) - parent_score
        score[~valid] = -np.inf
        i = int(np.argmax(score))
        if score[i] > best_gain:
            best_gain = score[i]
            best = (int(f), float((xs[i] + xs[i + 1]) / 2.0))
    return best


def _build_tree(X, y, depth, max_depth, feature_idx):
    if depth >= max_depth:
        return {"value": float(y.mean())}
    split = _best_split(X, y, feature_idx)
    if split is None:
        return {"value": float(y.mean())}
    f, thr = split
    left = X[:, f] <= thr
    return {
        "feature": f,
        "threshold": thr,
        "left": _build_tree(X[left], y[left], depth + 1, max_depth, feature_idx),
        "right": _build_tree(X[~left], y[~left], depth + 1, max_depth, feature_idx),
    }


def _predict_tree(node: dict, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if "value" in nd:
            out[idx] = nd["value"]
            continue
        mask = X[idx, nd["feature"]] <= nd["threshold"]
        stack.append((nd["left"], idx[mask]))
        stack.append((nd["right"], idx[~mask]))
    return out


def tree_depth(node: dict) -> int:
    if "value" in node:
        return 0
    return 1 + max(tree_depth(node["left"]), tree_depth(node["right"]))


@dataclass
class GbtModel:
    """One boosted ensemble per output column."""

    base_scores: np.ndarray           # per output
    trees: list[list[dict]]           # per output, per round
    eta: float
    rounds: int
    max_depth: int
    subsample: float
    colsample: float
    train_rmse_path: np.ndarray = field(default=None, repr=False)

    @property
    def n_outputs(self) -> int:
        return len(self.base_scores)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.tile(self.base_scores, (X.shape[0], 1))
        for c, seq in enumerate(self.trees):
            for tree in seq:
                out[:, c] += self.eta * _predict_tree(tree, X)
        return out


def fit_gbt_arrays(
    X: np.ndarray, Y: np.ndarray, params: dict, seed: int
) -> GbtModel:
    """Train the boosted ensemble on raw arrays (no hyperparameter search)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != X.shape[0]:
        raise ValueError("feature and target row counts differ")
    n, d = X.shape
    cfg = {**DEFAULT_GBT_PARAMS, **params}
    eta, rounds = float(cfg["eta"]), int(cfg["rounds"])
    max_depth = int(cfg["max_depth"])
    subsample, colsample = float(cfg["subsample"]), float(cfg["colsample"])
    if not 0 < eta <= 1:
        raise ValueError("eta must be in (0, 1]")
    if not (0 < subsample <= 1 and 0 < colsample <= 1):
        raise ValueError("subsample and colsample must be in (0, 1]")

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x6B7)))
    base = Y.mean(axis=0)
    if np.ptp(Y, axis=0).max() == 0:
        warnings.warn("constant targets: returning a base-score-only model", RuntimeWarning)
        return GbtModel(
            base_scores=base, trees=[[] for _ in range(Y.shape[1])],
            eta=eta, rounds=0, max_depth=max_depth,
            subsample=subsample, colsample=colsample,
            train_rmse_path=np.array([]),
        )

    pred = np.tile(base, (n, 1))
    trees: list[list[dict]] = [[] for _ in range(Y.shape[1])]
    n_sub = max(1, int(round(subsample * n)))
    n_col = max(1, int(round(colsample * d)))
    rmse_path = np.empty(rounds)
    for r in range(rounds):
        for c in range(Y.shape[1]):
            resid = Y[:, c] - pred[:, c]
            rows = (
                np.arange(n) if n_sub == n
                else np.sort(rng.choice(n, size=n_sub, replace=False))
            )
            cols = (
                np.arange(d) if n_col == d
                else np.sort(rng.choice(d, size=n_col, replace=False))
            )
            tree = _build_tree(X[rows], resid[rows], 0, max_depth, cols)
            trees[c].append(tree)
            pred[:, c] += eta * _predict_tree(tree, X)
        rmse_path[r] = float(np.sqrt(np.mean((Y - pred) ** 2)))
    return GbtModel(
        base_scores=base, trees=trees, eta=eta, rounds=rounds,
        max_depth=max_depth, subsample=subsample, colsample=colsample,
        train_rmse_path=rmse_path,
    )


def fit_gbt(training_set, grid, seed: int, folds: int = 2) -> GbtModel:
    """Grid-searched boosted trees for one parent group."""
    from htsdyn.dynamic_disagg.search import grid_search

    best, _ = grid_search(fit_gbt_arrays, training_set, grid, folds, seed)
    return fit_gbt_arrays(training_set.features, training_set.targets, best, seed)
