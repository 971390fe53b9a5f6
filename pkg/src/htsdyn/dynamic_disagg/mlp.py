"""Single-hidden-layer feed-forward net trained by back-propagation.

Full-batch gradient descent on mean squared error over all proportion
outputs jointly, with a learning-rate decay schedule.  Features are min-max
scaled into [0, 1] before they reach the network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from htsdyn.dynamic_disagg.features import MinMaxScaler

DEFAULT_MLP_PARAMS = {
    "hidden": 8,
    "activation": "linear",
    "learning_rate": 0.5,
    "decay": 0.0,
    "epochs": 3000,
}

MAX_RESTARTS = 5


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "linear":
        return z
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-np.clip(z, -35, 35)))
    raise ValueError(f"unknown activation {kind!r}")


def _act_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "linear":
        return np.ones_like(z)
    a = _act(z, "sigmoid")
    return a * (1.0 - a)


def forward(params: dict, X: np.ndarray, activation: str) -> np.ndarray:
    hidden = _act(X @ params["w1"] + params["b1"], activation)
    return hidden @ params["w2"] + params["b2"]


def loss_and_gradients(params: dict, X: np.ndarray, Y: np.ndarray, activation: str):
    """Mean squared error and its gradients w.r.t. every parameter array."""
    z1 = X @ params["w1"] + params["b1"]
    a1 = _act(z1, activation)
    out = a1 @ params["w2"] + params["b2"]
    err = out - Y
    loss = float(np.mean(err**2))
    d_out = 2.0 * err / err.size
    grads = {
        "w2": a1.T @ d_out,
        "b2": d_out.sum(axis=0),
    }
    d_a1 = d_out @ params["w2"].T
    d_z1 = d_a1 * _act_grad(z1, activation)
    grads["w1"] = X.T @ d_z1
    grads["b1"] = d_z1.sum(axis=0)
    return loss, grads


@dataclass
class MlpModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str
    learning_rate: float
    decay: float
    scaler: MinMaxScaler

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        params = {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}
        return forward(params, self.scaler.transform(X), self.activation)


def _init_params(d: int, hidden: int, c: int, rng: np.random.Generator) -> dict:
    return {
        "w1": rng.uniform(-0.1, 0.1, size=(d, hidden)),
        "b1": rng.uniform(-0.1, 0.1, size=hidden),
        "w2": rng.uniform(-0.1, 0.1, size=(hidden, c)),
        "b2": rng.uniform(-0.1, 0.1, size=c),
    }


def fit_mlp_arrays(X: np.ndarray, Y: np.ndarray, params: dict, seed: int) -> MlpModel:
    """Train on raw feature arrays; the scaler is fitted here."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    cfg = {**DEFAULT_MLP_PARAMS, **params}
    hidden = int(cfg["hidden"])
    activation = str(cfg["activation"])
    lr0 = float(cfg["learning_rate"])
    decay = float(cfg["decay"])
    epochs = int(cfg["epochs"])

    scaler = MinMaxScaler.fit(X)
    Xs = scaler.transform(X)
    d, c = X.shape[1], Y.shape[1]
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x3117)))
    init = _init_params(d, hidden, c, rng)

    lr = lr0
    for _restart in range(MAX_RESTARTS + 1):
        weights = {k: v.copy() for k, v in init.items()}
        ok = True
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(epochs):
                step = lr / (1.0 + decay * epoch)
                loss, grads = loss_and_gradients(weights, Xs, Y, activation)
                if not np.isfinite(loss):
                    ok = False
                    break
                if loss < 1e-14:
                    break
                for key in weights:
                    weights[key] -= step * grads[key]
            if ok:
                final_loss, _ = loss_and_gradients(weights, Xs, Y, activation)
                if np.isfinite(final_loss):
                    break
        lr *= 0.5  # exploding step: halve the rate and restart
    else:
        raise RuntimeError("MLP training diverged after maximum restarts")
    return MlpModel(
        w1=weights["w1"], b1=weights["b1"], w2=weights["w2"], b2=weights["b2"],
        activation=activation, learning_rate=lr0, decay=decay, scaler=scaler,
    )


def fit_mlp(training_set, grid, seed: int, folds: int = 2) -> MlpModel:
    """Grid-searched network for one parent group."""
    from htsdyn.dynamic_disagg.search import grid_search

    best, _ = grid_search(fit_mlp_arrays, training_set, grid, folds, seed)
    return fit_mlp_arrays(training_set.features, training_set.targets, best, seed)
