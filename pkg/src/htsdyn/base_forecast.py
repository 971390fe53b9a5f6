"""Independent base forecasts: autoregression with price as a regressor.

Sales are modelled on the log(1+x) scale (zero-sales weeks are legal) with
log price as an exogenous input.  Coefficients come from ordinary least
squares conditional on the first p observations; multi-step forecasts are
recursive on the log scale and back-transformed with exp(x)-1, floored at 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from htsdyn.hierarchy import HierarchySpec, SeriesPanel

# columns whose spread falls below this (relative to their magnitude) are
# absorbed into the intercept instead of entering the regression
CONSTANT_COL_TOL = 1e-12


class FitError(ValueError):
    """Raised when a regression design cannot be solved."""


def encode_sales(sales: np.ndarray) -> np.ndarray:
    """log(1 + sales); tolerates zero-sales weeks."""
    return np.log1p(np.asarray(sales, dtype=float))


def decode_sales(log_sales: np.ndarray) -> np.ndarray:
    """Inverse of encode_sales, floored at zero."""
    return np.maximum(np.expm1(log_sales), 0.0)


@dataclass(frozen=True)
class ArxModel:
    """AR(p) on log(1+sales) with log(price) as exogenous regressor."""

    p: int
    intercept: float
    ar_coeffs: np.ndarray
    price_coeff: float
    residual_variance: float
    train_residuals: np.ndarray


def _design(log_sales: np.ndarray, log_price: np.ndarray, p: int):
    """Target y_t and design [1 | lags 1..p | log price] for t = p..n-1."""
    n = len(log_sales)
    y = log_sales[p:]
    cols = [np.ones(n - p)]
    names = ["intercept"]
    for lag in range(1, p + 1):
        cols.append(log_sales[p - lag : n - lag])
        names.append(f"lag{lag}")
    cols.append(log_price[p:])
    names.append("log_price")
    return y, np.column_stack(cols), names


def _solve_ols(X: np.ndarray, y: np.ndarray, names: list[str]) -> np.ndarray:
    """Least squares with constant-column absorption and collinearity check.

    Non-intercept columns that are numerically constant are dropped (their
    effect folds into the intercept, coefficient reported as 0).  A remaining
    rank deficiency is an error naming the dependent column.
    """
    n_rows, n_cols = X.shape
    keep = [0]
    dropped = []
    for j in range(1, n_cols):
        col = X[:, j]
        scale = max(np.max(np.abs(col)), 1.0)
        if np.ptp(col) > CONSTANT_COL_TOL * scale:
            keep.append(j)
        else:
            dropped.append(names[j])
    if n_cols > 1 and len(keep) == 1:
        raise FitError(
            "singular design matrix: every regressor "
            f"({', '.join(dropped)}) is constant and collinear with the intercept"
        )
    Xk = X[:, keep]
    # pivoted-QR style rank check via column norms of the residualized design
    rank = np.linalg.matrix_rank(Xk)
    if rank < Xk.shape[1]:
        # identify a dependent column: regress each on the previous ones
        for idx in range(1, Xk.shape[1]):
            sub = Xk[:, :idx]
            coef, *_ = np.linalg.lstsq(sub, Xk[:, idx], rcond=None)
            resid = Xk[:, idx] - sub @ coef
            if np.linalg.norm(resid) <= 1e-8 * max(np.linalg.norm(Xk[:, idx]), 1.0):
                raise FitError(
                    f"singular design matrix: column '{names[keep[idx]]}' is "
                    "collinear with earlier columns"
                )
        raise FitError("singular design matrix")
    beta_k, *_ = np.linalg.lstsq(Xk, y, rcond=None)
    beta = np.zeros(n_cols)
    for b, j in zip(beta_k, keep):
        beta[j] = b
    return beta


def fit_arx(sales: np.ndarray, price: np.ndarray, p: int) -> ArxModel:
    """Fit AR(p) with log-price regressor by OLS; stores one-step residuals."""
    sales = np.asarray(sales, dtype=float)
    price = np.asarray(price, dtype=float)
    n = len(sales)
    if p < 0:
        raise ValueError("order p must be >= 0")
    if n < p + 5:
        raise ValueError(f"need at least p + 5 = {p + 5} observations, got {n}")
    if (sales < 0).any():
        raise ValueError("sales must be non-negative")
    if (price <= 0).any():
        raise ValueError("price must be positive")

    y, X, names = _design(encode_sales(sales), np.log(price), p)
    beta = _solve_ols(X, y, names)
    residuals = y - X @ beta
    variance = float(np.var(residuals, ddof=1)) if len(residuals) > 1 else 0.0
    return ArxModel(
        p=p,
        intercept=float(beta[0]),
        ar_coeffs=beta[1 : p + 1].copy(),
        price_coeff=float(beta[p + 1]),
        residual_variance=variance,
        train_residuals=residuals,
    )


def select_order(sales: np.ndarray, price: np.ndarray, p_grid) -> int:
    """Pick the AR order minimizing AIC; ties break to the smaller order.

    AIC = n_eff * ln(SSE / n_eff) + 2 (p + 2), with n_eff the effective
    sample of each candidate's fit (n - p).  The +2 counts the intercept
    and the price coefficient alongside the p lag coefficients.
    """
    grid = sorted(set(int(p) for p in p_grid))
    if not grid:
        raise ValueError("p_grid is empty")
    n = len(sales)
    if max(grid) + 5 > n:
        raise ValueError("series too short for the largest order in p_grid")
    best_p, best_aic = None, np.inf
    failures: list[str] = []
    for p in grid:
        try:
            model = fit_arx(sales, price, p)
        except FitError as exc:
            failures.append(f"p={p}: {exc}")
            continue
        n_eff = len(model.train_residuals)
        sse = float(model.train_residuals @ model.train_residuals)
        sse = max(sse, 1e-300)  # guard exact fits
        aic = n_eff * np.log(sse / n_eff) + 2.0 * (p + 2)
        if aic < best_aic:
            best_p, best_aic = p, aic
    if best_p is None:
        raise FitError("all candidate orders failed: " + "; ".join(failures))
    return best_p


def forecast_arx(model: ArxModel, history: np.ndarray, future_price: np.ndarray) -> np.ndarray:
    """Recursive h-step forecasts on the sales scale.

    Own log-scale predictions feed back as lagged inputs; the back-transform
    exp(x)-1 is floored at zero.
    """
    history = np.asarray(history, dtype=float)
    future_price = np.asarray(future_price, dtype=float)
    if len(history) < model.p:
        raise ValueError(f"history shorter than model order {model.p}")
    if (future_price <= 0).any():
        raise ValueError("future prices must be positive")
    log_hist = list(encode_sales(history))
    out = np.empty(len(future_price))
    for h, price in enumerate(future_price):
        val = model.intercept + model.price_coeff * np.log(price)
        for lag in range(1, model.p + 1):
            val += model.ar_coeffs[lag - 1] * log_hist[-lag]
        log_hist.append(val)
        out[h] = val
    return decode_sales(out)


def naive_forecast(sales: np.ndarray, horizon: int) -> np.ndarray:
    """Repeat the last observation ``horizon`` times."""
    sales = np.asarray(sales, dtype=float)
    if sales.size == 0:
        raise ValueError("empty series")
    return np.full(horizon, sales[-1])


@dataclass(frozen=True)
class BaseForecasts:
    """Independent point forecasts plus in-sample residuals per node.

    ``values`` is nodes x horizons on the sales scale, row order matching
    the hierarchy.  ``residuals`` holds one-step in-sample residuals on the
    log scale, right-aligned and truncated to a common width so nodes with
    different AR orders stay comparable.
    """

    node_ids: tuple[str, ...]
    values: np.ndarray
    residuals: np.ndarray
    orders: tuple[int, ...]

    def for_nodes(self, node_ids: list[str]) -> np.ndarray:
        rows = [self.node_ids.index(n) for n in node_ids]
        return self.values[rows, :]


def forecast_all_nodes(
    panel: SeriesPanel,
    hier: HierarchySpec,
    train_weeks: int,
    horizon: int,
    p_grid=(0, 1, 2, 3),
) -> BaseForecasts:
    """Fit an ARX per node on the training window and forecast the horizon.

    Future prices over the test window are taken from the panel (planned
    promotion inputs are known in advance).
    """
    if train_weeks + horizon > panel.n_weeks:
        raise ValueError("train_weeks + horizon exceeds the panel length")
    m = hier.n_nodes
    values = np.empty((m, horizon))
    residual_rows: list[np.ndarray] = []
    orders: list[int] = []
    for i in range(m):
        sales = panel.sales[i, :train_weeks]
        price = panel.price[i, :train_weeks]
        future_price = panel.price[i, train_weeks : train_weeks + horizon]
        p = select_order(sales, price, p_grid)
        model = fit_arx(sales, price, p)
        values[i] = forecast_arx(model, sales, future_price)
        residual_rows.append(model.train_residuals)
        orders.append(p)
    width = min(len(r) for r in residual_rows)
    residuals = np.vstack([r[-width:] for r in residual_rows])
    return BaseForecasts(
        node_ids=tuple(hier.node_ids),
        values=values,
        residuals=residuals,
        orders=tuple(orders),
    )
