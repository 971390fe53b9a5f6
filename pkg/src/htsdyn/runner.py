"""Orchestration: base forecasts, every reconciliation method, evaluation.

This is the shared engine behind the CLI and the benchmark: given a panel
(or a batch of simulated groups) it produces reconciled forecasts per
method and scores them, isolating failures per (method, group).
"""

from __future__ import annotations

import warnings

import numpy as np

from htsdyn.base_forecast import BaseForecasts, forecast_all_nodes
from htsdyn.datasim import SimConfig, simulate_batch
from htsdyn.dynamic_disagg import HyperGrid
from htsdyn.dynamic_disagg.dhf import dhf_forecast
from htsdyn.dynamic_disagg.search import (
    PAPER_GBT_GRID_SPEC,
    PAPER_MLP_GRID_SPEC,
    PAPER_SVR_GRID_SPEC,
)
from htsdyn.eval import DEFAULT_WINDOWS, EvalReport, evaluate
from htsdyn.hierarchy import HierarchySpec, SeriesPanel, summing_matrix
from htsdyn.reconcile import (
    PMatrix,
    ReconciledForecasts,
    conventional_middle_out,
    estimate_w_diagonal,
    estimate_w_sample,
    estimate_w_shrink,
    p_bottom_up,
    p_top_down,
    p_mint,
    p_wls,
    reconcile,
    reconciled_variance,
    td_proportions_gs1,
    td_proportions_gs2,
    tdfp_proportions,
)

STATIC_METHODS = ("BU", "TD_GS1", "TD_GS2", "TDFP", "CMO", "WLS", "MINT_SAMPLE", "MINT_SHRINK")
DHF_METHODS = ("DHF_GBT", "DHF_MLP", "DHF_SVR")
ALL_METHODS = STATIC_METHODS + DHF_METHODS

GRID_PROFILES = {
    "default": {"gbt": None, "mlp": None, "svr": None},  # family defaults
    "paper": {
        "gbt": HyperGrid(PAPER_GBT_GRID_SPEC),
        "mlp": HyperGrid(PAPER_MLP_GRID_SPEC),
        "svr": HyperGrid(PAPER_SVR_GRID_SPEC),
    },
    "single": {
        "gbt": HyperGrid({"rounds": [100], "max_depth": [3]}),
        "mlp": HyperGrid({"hidden": [8]}),
        "svr": HyperGrid({"kernel": ["rbf"], "gamma": [0.5], "C": [10.0]}),
    },
}


def _train_panel(panel: SeriesPanel, train_weeks: int) -> SeriesPanel:
    return SeriesPanel(
        node_ids=panel.node_ids,
        times=panel.times[:train_weeks],
        sales=panel.sales[:, :train_weeks],
        price=panel.price[:, :train_weeks],
    )


def run_method(
    method: str,
    panel: SeriesPanel,
    hier: HierarchySpec,
    train_weeks: int,
    horizon: int,
    seed: int,
    base: BaseForecasts | None = None,
    dhf_lags: int = 3,
    dhf_folds: int = 2,
    grid_profile: str = "single",
) -> ReconciledForecasts:
    """Produce reconciled forecasts for one method on one panel."""
    S = summing_matrix(hier)
    node_ids = tuple(hier.node_ids)
    if method in DHF_METHODS:
        family = method.split("_", 1)[1].lower()
        return dhf_forecast(
            panel, hier, family, horizon, seed,
            train_weeks=train_weeks, lags=dhf_lags,
            grid=GRID_PROFILES[grid_profile][family], folds=dhf_folds,
        )
    if base is None:
        base = forecast_all_nodes(panel, hier, train_weeks, horizon)
    train = _train_panel(panel, train_weeks)

    if method == "BU":
        return reconcile(p_bottom_up(S), S, base.values, node_ids)
    if method == "TD_GS1":
        p = td_proportions_gs1(train, hier.top_id, hier.bottom_ids)
        return reconcile(p_top_down(p, hier.n_nodes), S, base.values, node_ids)
    if method == "TD_GS2":
        p = td_proportions_gs2(train, hier.top_id, hier.bottom_ids)
        return reconcile(p_top_down(p, hier.n_nodes), S, base.values, node_ids)
    if method == "TDFP":
        cols = []
        for h in range(horizon):
            p = tdfp_proportions(base, h, hier)
            rec_h = reconcile(p_top_down(p, hier.n_nodes), S, base.values[:, h], node_ids)
            cols.append(rec_h.bottom_estimates[:, 0])
        bottom = np.column_stack(cols)
        values = S @ bottom
        values[0, :] = base.values[0, :]
        return ReconciledForecasts(
            node_ids=node_ids, values=values, bottom_estimates=bottom, method_tag="TDFP"
        )
    if method == "CMO":
        mids = hier.nodes_at_level(1)
        base_mid = base.for_nodes(mids)
        return conventional_middle_out(base_mid, train, hier)
    if method in ("WLS", "MINT_SAMPLE", "MINT_SHRINK"):
        if method == "WLS":
            cov = estimate_w_diagonal(base.residuals)
            P = p_wls(S, cov)
        elif method == "MINT_SAMPLE":
            cov = estimate_w_sample(base.residuals)
            try:
                P = p_mint(S, cov)
            except np.linalg.LinAlgError:
                # MinT needs an invertible weight; a collinear residual set
                # makes the sample estimate singular even with n >= m
                warnings.warn(
                    "sample covariance is not positive definite; using the "
                    "shrinkage estimate for MINT_SAMPLE",
                    RuntimeWarning,
                )
                cov = estimate_w_shrink(base.residuals)
                P = p_mint(S, cov)
        else:
            cov = estimate_w_shrink(base.residuals)
            P = p_mint(S, cov)
        rec = reconcile(P, S, base.values, node_ids)
        return ReconciledForecasts(
            node_ids=node_ids,
            values=rec.values,
            bottom_estimates=rec.bottom_estimates,
            method_tag=method,
            floored=rec.floored,
            variance=reconciled_variance(S, cov),
        )
    raise ValueError(f"unknown method {method!r}; valid: {', '.join(ALL_METHODS)}")


def run_group(
    panel: SeriesPanel,
    hier: HierarchySpec,
    methods,
    train_weeks: int,
    horizon: int,
    seed: int,
    dhf_lags: int = 3,
    dhf_folds: int = 2,
    grid_profile: str = "single",
):
    """All methods on one panel: ({method: forecasts}, {method: error})."""
    needs_base = any(m not in DHF_METHODS for m in methods)
    base = (
        forecast_all_nodes(panel, hier, train_weeks, horizon) if needs_base else None
    )
    results: dict = {}
    failures: dict = {}
    for method in methods:
        try:
            results[method] = run_method(
                method, panel, hier, train_weeks, horizon, seed,
                base=base, dhf_lags=dhf_lags, dhf_folds=dhf_folds,
                grid_profile=grid_profile,
            )
        except Exception as exc:
            failures[method] = str(exc)
    return results, failures


def group_seed(master_seed: int, group_index: int) -> int:
    return int(np.random.SeedSequence((master_seed, 0x9E0, group_index)).generate_state(1)[0])


def run_panels(
    panels: dict,
    hier: HierarchySpec,
    methods,
    train_weeks: int,
    horizon: int,
    seed: int,
    windows=DEFAULT_WINDOWS,
    dhf_lags: int = 3,
    dhf_folds: int = 2,
    grid_profile: str = "single",
    jobs: int = 1,
):
    """Evaluate methods over a mapping group_id -> panel.

    Returns (EvalReport, failures) where failures maps (group, method) to
    the error message; failed pairs are excluded from the report.
    """
    group_ids = sorted(panels)
    tasks = [
        (
            panels[g], hier, tuple(methods), train_weeks, horizon,
            group_seed(seed, gi), dhf_lags, dhf_folds, grid_profile,
        )
        for gi, g in enumerate(group_ids)
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_group_star, tasks))
    else:
        outcomes = [_run_group_star(t) for t in tasks]

    method_results: dict = {m: {} for m in methods}
    failures: dict = {}
    for g, (results, errs) in zip(group_ids, outcomes):
        for m, rec in results.items():
            method_results[m][g] = rec
        for m, msg in errs.items():
            failures[(g, m)] = msg
    method_results = {m: d for m, d in method_results.items() if d}
    test_actuals = {
        g: panels[g].sales[:, train_weeks : train_weeks + horizon] for g in group_ids
    }
    report = evaluate(method_results, test_actuals, hier, windows)
    return report, failures


def _run_group_star(args):
    panel, hier, methods, train_weeks, horizon, seed, lags, folds, profile = args
    return run_group(
        panel, hier, methods, train_weeks, horizon, seed,
        dhf_lags=lags, dhf_folds=folds, grid_profile=profile,
    )


def run_benchmark(
    methods,
    n_groups: int = 61,
    seed: int = 0,
    sim_config: SimConfig | None = None,
    train_weeks: int = 112,
    horizon: int = 8,
    windows=DEFAULT_WINDOWS,
    grid_profile: str = "single",
    jobs: int = 1,
):
    """Simulate the multi-group benchmark and score the requested methods."""
    template = sim_config if sim_config is not None else SimConfig()
    outs = simulate_batch(template, n_groups, seed)
    hier = outs[0].hier
    width = len(str(max(n_groups - 1, 1)))
    panels = {f"g{gi:0{width}d}": out.panel for gi, out in enumerate(outs)}
    return run_panels(
        panels, hier, methods, train_weeks, horizon, seed,
        windows=windows, grid_profile=grid_profile, jobs=jobs,
    )
