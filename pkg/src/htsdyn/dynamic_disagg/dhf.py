"""Dynamic middle-out forecasting.

Forecast every middle node with the price-aware autoregression, sum those
forecasts for the top level, and split each middle forecast over its
children with proportions predicted by a learned model fed the middle
node's own forecasts.
"""

from __future__ import annotations

import warnings

import numpy as np

from htsdyn.base_forecast import fit_arx, forecast_arx, select_order
from htsdyn.dynamic_disagg.features import build_training_set, forecast_feature_rows
from htsdyn.dynamic_disagg.gbt import fit_gbt_arrays
from htsdyn.dynamic_disagg.mlp import fit_mlp_arrays
from htsdyn.dynamic_disagg.svr import fit_svr_arrays
from htsdyn.dynamic_disagg.search import (
    DEFAULT_GBT_GRID_SPEC,
    DEFAULT_MLP_GRID_SPEC,
    DEFAULT_SVR_GRID_SPEC,
    HyperGrid,
    grid_search,
)
from htsdyn.hierarchy import HierarchySpec, SeriesPanel, summing_matrix
from htsdyn.reconcile import ReconciledForecasts

PROPORTION_CLIP_FLOOR = 1e-6

MODEL_FAMILIES = {
    "gbt": (fit_gbt_arrays, DEFAULT_GBT_GRID_SPEC),
    "mlp": (fit_mlp_arrays, DEFAULT_MLP_GRID_SPEC),
    "svr": (fit_svr_arrays, DEFAULT_SVR_GRID_SPEC),
}


def predict_proportions(model, parent_feature_rows: np.ndarray) -> np.ndarray:
    """Children proportions per horizon row: clip then renormalize to 1.

    Raw predictions are clipped into [1e-6, 1]; a row where every child was
    clipped to the floor falls back to uniform shares with a warning.
    """
    raw = np.atleast_2d(model.predict(parent_feature_rows))
    clipped = np.clip(raw, PROPORTION_CLIP_FLOOR, 1.0)
    c = clipped.shape[1]
    out = np.empty_like(clipped)
    for h in range(clipped.shape[0]):
        row = clipped[h]
        if np.all(row <= PROPORTION_CLIP_FLOOR):
            warnings.warn(
                f"all proportions clipped to the floor at horizon {h + 1}; "
                "using uniform shares",
                RuntimeWarning,
            )
            out[h] = np.full(c, 1.0 / c)
        else:
            out[h] = row / row.sum()
    return out


def _fit_family(family: str, training_set, grid: HyperGrid | None, seed: int, folds: int):
    trainer, default_spec = MODEL_FAMILIES[family]
    if grid is None:
        grid = HyperGrid(default_spec)
    best, _ = grid_search(trainer, training_set, grid, folds, seed)
    model = trainer(training_set.features, training_set.targets, best, seed)
    return model, best


def dhf_forecast(
    panel: SeriesPanel,
    hier: HierarchySpec,
    model_family: str,
    horizon: int,
    seed: int,
    train_weeks: int | None = None,
    lags: int = 3,
    grid: HyperGrid | None = None,
    folds: int = 2,
    p_grid=(0, 1, 2, 3),
) -> ReconciledForecasts:
    """Middle-out forecast with learned, horizon-varying child proportions."""
    if model_family not in MODEL_FAMILIES:
        raise ValueError(f"unknown model family {model_family!r}")
    if hier.level_count < 3:
        raise ValueError("dynamic middle-out needs a middle level (3+ levels)")
    n_train = train_weeks if train_weeks is not None else panel.n_weeks - horizon
    if n_train + horizon > panel.n_weeks:
        raise ValueError("train window plus horizon exceeds the panel")

    S = summing_matrix(hier)
    mids = hier.nodes_at_level(1)
    bottom_ids = hier.bottom_ids
    bottom = np.zeros((len(bottom_ids), horizon))

    for mi, mid in enumerate(mids):
        try:
            sales = panel.sales[panel.row(mid), :n_train]
            price = panel.price[panel.row(mid), :n_train]
            future_price = panel.price[panel.row(mid), n_train : n_train + horizon]
            order = select_order(sales, price, p_grid)
            arx = fit_arx(sales, price, order)
            mid_forecast = forecast_arx(arx, sales, future_price)

            kids = hier.children_of(mid)
            tset = build_training_set(panel, mid, kids, lags, train_weeks=n_train)
            group_seed = int(np.random.SeedSequence((seed, 0xD4F, mi)).generate_state(1)[0])
            model, _ = _fit_family(model_family, tset, grid, group_seed, folds)
            rows = forecast_feature_rows(sales, mid_forecast, future_price, lags)
            props = predict_proportions(model, rows)
        except Exception as exc:
            raise RuntimeError(f"dynamic disaggregation failed for group {mid!r}: {exc}") from exc
        for ci, child in enumerate(kids):
            bottom[bottom_ids.index(child)] = mid_forecast * props[:, ci]

    values = S @ bottom
    return ReconciledForecasts(
        node_ids=tuple(hier.node_ids),
        values=values,
        bottom_estimates=bottom,
        method_tag=f"DHF_{model_family.upper()}",
    )
