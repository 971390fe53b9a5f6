"""Epsilon-insensitive support vector regression via SMO.

The dual is solved over the stacked (alpha, alpha*) variables with the
maximal-violating-pair working-set rule; the equality constraint
sum(alpha - alpha*) = 0 is preserved exactly by every pairwise update and
the box 0 <= alpha, alpha* <= C holds by clipping, so the KKT-side
invariants are structural.  One machine is fitted per output column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SVR_PARAMS = {
    "kernel": "rbf",
    "gamma": 0.5,
    "C": 10.0,
    "epsilon": 0.01,
    "degree": 3,
    "coef0": 1.0,
}

KKT_TOL = 1e-3
MAX_SMO_ITER = 20000


class SvrConvergenceError(RuntimeError):
    pass


def kernel_matrix(A: np.ndarray, B: np.ndarray, kind: str, gamma: float,
                  degree: int = 3, coef0: float = 1.0) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if kind == "linear":
        return A @ B.T
    if kind == "poly":
        return (gamma * (A @ B.T) + coef0) ** degree
    if kind == "rbf":
        sq = (A**2).sum(axis=1)[:, None] + (B**2).sum(axis=1)[None, :] - 2.0 * A @ B.T
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError(f"unknown kernel {kind!r}")


def smo_solve(K: np.ndarray, y: np.ndarray, C: float, epsilon: float,
              tol: float = KKT_TOL, max_iter: int = MAX_SMO_ITER):
    """Solve the epsilon-SVR dual for one output.

    Returns (beta, bias, kkt_gap, iterations) with beta = alpha - alpha*.
    """
    n = len(y)
    # stacked problem: a = [alpha; alpha*], signs z, gradient G = Qbar a + p
    z = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - y, epsilon + y])
    Qbar = np.vstack([np.hstack([K, -K]), np.hstack([-K, K])])
    a = np.zeros(2 * n)
    G = p.copy()

    diag = np.diag(Qbar)
    it = 0
    while True:
        zg = -z * G
        up = np.where(z > 0, a < C - 1e-12, a > 1e-12)
        low = np.where(z > 0, a > 1e-12, a < C - 1e-12)
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.argmax(np.where(up, zg, -np.inf)))
        j = int(np.argmin(np.where(low, zg, np.inf)))
        gap = zg[i] - zg[j]
        if gap <= tol:
            break
        if it >= max_iter:
            raise SvrConvergenceError(
                f"SMO did not converge in {max_iter} iterations; "
                f"KKT duality gap {gap:.3e} (tolerance {tol:.1e})"
            )
        quad = diag[i] + diag[j] - 2.0 * z[i] * z[j] * Qbar[i, j]
        quad = max(quad, 1e-12)
        t = gap / quad
        # keep both coordinates inside the box
        t = min(t, (C - a[i]) if z[i] > 0 else a[i])
        t = min(t, a[j] if z[j] > 0 else (C - a[j]))
        a[i] += z[i] * t
        a[j] -= z[j] * t
        a[i] = min(max(a[i], 0.0), C)
        a[j] = min(max(a[j], 0.0), C)
        G += Qbar[:, i] * (z[i] * t) - Qbar[:, j] * (z[j] * t)
        it += 1

    zg = -z * G
    up = np.where(z > 0, a < C - 1e-12, a > 1e-12)
    low = np.where(z > 0, a > 1e-12, a < C - 1e-12)
    hi = np.max(np.where(up, zg, -np.inf)) if up.any() else -np.inf
    lo = np.min(np.where(low, zg, np.inf)) if low.any() else np.inf
    if np.isfinite(hi) and np.isfinite(lo):
        bias = float((hi + lo) / 2.0)
    elif np.isfinite(hi):
        bias = float(hi)
    elif np.isfinite(lo):
        bias = float(lo)
    else:
        bias = float(np.mean(y))
    beta = a[:n] - a[n:]
    return beta, bias, float(max(gap, 0.0)), it


@dataclass
class ChildSvr:
    beta: np.ndarray          # alpha - alpha* at the support vectors
    support: np.ndarray       # support-vector inputs
    bias: float
    kkt_gap: float


@dataclass
class SvrModel:
    """Per-child epsilon-SVR machines sharing one kernel configuration."""

    children: list[ChildSvr]
    kernel: str
    gamma: float
    C: float
    epsilon: float
    degree: int = 3
    coef0: float = 1.0

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty((X.shape[0], len(self.children)))
        for c, child in enumerate(self.children):
            if child.support.size == 0:
                out[:, c] = child.bias
                continue
            K = kernel_matrix(X, child.support, self.kernel, self.gamma,
                              self.degree, self.coef0)
            out[:, c] = K @ child.beta + child.bias
        return out


def fit_svr_arrays(X: np.ndarray, Y: np.ndarray, params: dict, seed: int) -> SvrModel:
    """Fit one machine per output column on raw arrays."""
    del seed  # the SMO solve is deterministic
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    cfg = {**DEFAULT_SVR_PARAMS, **params}
    kernel = str(cfg["kernel"])
    gamma = float(cfg["gamma"])
    C = float(cfg["C"])
    epsilon = float(cfg["epsilon"])
    degree, coef0 = int(cfg["degree"]), float(cfg["coef0"])
    if gamma <= 0 or C <= 0 or epsilon <= 0:
        raise ValueError("gamma, C and epsilon must be positive")

    K = kernel_matrix(X, X, kernel, gamma, degree, coef0)
    children = []
    for c in range(Y.shape[1]):
        beta, bias, gap, _ = smo_solve(K, Y[:, c], C, epsilon)
        sv = np.abs(beta) > 1e-12
        children.append(
            ChildSvr(beta=beta[sv], support=X[sv], bias=bias, kkt_gap=gap)
        )
    return SvrModel(children=children, kernel=kernel, gamma=gamma, C=C,
                    epsilon=epsilon, degree=degree, coef0=coef0)


def fit_svr(training_set, grid, seed: int, folds: int = 2) -> SvrModel:
    """Grid-searched SVR for one parent group."""
    from htsdyn.dynamic_disagg.search import grid_search

    best, _ = grid_search(fit_svr_arrays, training_set, grid, folds, seed)
    return fit_svr_arrays(training_set.features, training_set.targets, best, seed)
