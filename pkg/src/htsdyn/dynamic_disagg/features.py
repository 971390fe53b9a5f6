"""Training sets for proportion models.

Inputs are the parent's log sales at lags 0..L plus the parent's log price;
targets are the children's sales shares of the parent, one row per usable
week.  A min-max scaler fitted on the features rides along for the neural
model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from htsdyn.base_forecast import encode_sales
from htsdyn.hierarchy import SeriesPanel

MIN_TRAINING_ROWS = 20


@dataclass(frozen=True)
class MinMaxScaler:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "MinMaxScaler":
        return cls(lo=X.min(axis=0), hi=X.max(axis=0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        scaled = (X - self.lo) / safe
        return np.where(span > 0, scaled, 0.0)


@dataclass(frozen=True)
class ProportionTrainingSet:
    """Feature/target matrices for one parent group, rows time-ordered."""

    parent_id: str
    child_ids: tuple[str, ...]
    features: np.ndarray   # n_eff x (lags + 2)
    targets: np.ndarray    # n_eff x children, rows sum to 1
    scaler: MinMaxScaler
    lags: int

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]


def group_feature_matrix(
    parent_sales: np.ndarray, parent_price: np.ndarray, lags: int
) -> np.ndarray:
    """Rows t = lags..n-1: [log1p sales at lags 0..L, log price at lag 0]."""
    n = len(parent_sales)
    log_sales = encode_sales(parent_sales)
    cols = [log_sales[lags - j : n - j] for j in range(lags + 1)]
    cols.append(np.log(parent_price[lags:]))
    return np.column_stack(cols)


def build_training_set(
    panel: SeriesPanel,
    parent_id: str,
    child_ids: list[str],
    lags: int,
    train_weeks: int | None = None,
) -> ProportionTrainingSet:
    """Assemble the supervised problem for one parent group.

    Weeks with zero parent sales are dropped (their proportions are 0/0);
    the first ``lags`` weeks are dropped for lack of a full lag window.
    """
    n = train_weeks if train_weeks is not None else panel.n_weeks
    parent_sales = panel.sales[panel.row(parent_id), :n]
    parent_price = panel.price[panel.row(parent_id), :n]
    child_sales = np.vstack([panel.sales[panel.row(c), :n] for c in child_ids])

    X = group_feature_matrix(parent_sales, parent_price, lags)
    parent_tail = parent_sales[lags:]
    usable = parent_tail > 0
    if usable.sum() < MIN_TRAINING_ROWS:
        raise ValueError(
            f"group {parent_id!r}: {int(usable.sum())} usable training rows, "
            f"need at least {MIN_TRAINING_ROWS}"
        )
    X = X[usable]
    targets = (child_sales[:, lags:][:, usable] / parent_tail[usable]).T
    return ProportionTrainingSet(
        parent_id=parent_id,
        child_ids=tuple(child_ids),
        features=X,
        targets=targets,
        scaler=MinMaxScaler.fit(X),
        lags=lags,
    )


def forecast_feature_rows(
    history_sales: np.ndarray,
    forecast_sales: np.ndarray,
    future_price: np.ndarray,
    lags: int,
) -> np.ndarray:
    """Feature rows over the horizon, splicing forecasts into the lag window.

    At horizon h, lag j reads the parent's forecast when it lands inside the
    horizon and the actual history otherwise.
    """
    spliced = np.concatenate([np.asarray(history_sales, float), np.asarray(forecast_sales, float)])
    log_all = encode_sales(spliced)
    n_hist = len(history_sales)
    H = len(forecast_sales)
    if len(future_price) != H:
        raise ValueError("future_price length must match the forecast length")
    rows = np.empty((H, lags + 2))
    for h in range(H):
        t = n_hist + h
        for j in range(lags + 1):
            rows[h, j] = log_all[t - j]
        rows[h, lags + 1] = np.log(future_price[h])
    return rows
