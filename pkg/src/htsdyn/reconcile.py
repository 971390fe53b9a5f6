"""Reconciliation operators: Ytilde = S P Yhat.

Every method reduces to a choice of P mapping the stacked base forecasts
(all nodes) to bottom-level estimates, which the summing matrix aggregates
back into a coherent forecast set.  Solves use Cholesky factorization,
never explicit inversion.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.linalg import LinAlgError

from htsdyn.base_forecast import BaseForecasts
from htsdyn.hierarchy import HierarchySpec, SeriesPanel, summing_matrix

METHOD_TAGS = (
    "BU",
    "TD_GS1",
    "TD_GS2",
    "TDFP",
    "CMO",
    "WLS",
    "MINT_SAMPLE",
    "MINT_SHRINK",
)

# method tags whose P is a projection (S P S = S); top-down and middle-out
# operators are deliberately not projections
PROJECTION_TAGS = ("BU", "WLS", "MINT_SAMPLE", "MINT_SHRINK")


@dataclass(frozen=True)
class PMatrix:
    """Linear operator (bottom x all-nodes) plus the method it came from."""

    entries: np.ndarray
    method_tag: str


@dataclass(frozen=True)
class ProportionVector:
    """Disaggregation proportions over one group of bottom nodes."""

    values: np.ndarray
    basis: str  # historical_avg | avg_of_ratios | forecasted


@dataclass(frozen=True)
class CovarianceEstimate:
    """Base-forecast error covariance W with its estimator provenance."""

    W: np.ndarray
    estimator: str  # sample | shrinkage | diagonal
    shrink_lambda: float | None = None


@dataclass(frozen=True)
class ReconciledForecasts:
    """Coherent forecast set: values = S @ bottom_estimates per horizon."""

    node_ids: tuple[str, ...]
    values: np.ndarray          # all nodes x horizons, sales scale
    bottom_estimates: np.ndarray  # bottom nodes x horizons
    method_tag: str
    floored: bool = False       # true when negative bottoms were clipped
    variance: np.ndarray | None = None


# -- P constructions ---------------------------------------------------------

def p_bottom_up(S: np.ndarray) -> PMatrix:
    """Zero block then identity: trust the bottom base forecasts."""
    m, m_k = S.shape
    P = np.hstack([np.zeros((m_k, m - m_k)), np.eye(m_k)])
    return PMatrix(entries=P, method_tag="BU")


def p_top_down(p: ProportionVector, m: int) -> PMatrix:
    """First column carries the proportions, the rest is zero."""
    values = np.asarray(p.values, dtype=float)
    if abs(values.sum() - 1.0) > 1e-9:
        raise ValueError("proportions must sum to 1")
    P = np.zeros((len(values), m))
    P[:, 0] = values
    tag = {"historical_avg": "TD_GS1", "avg_of_ratios": "TD_GS2", "forecasted": "TDFP"}[p.basis]
    return PMatrix(entries=P, method_tag=tag)


def _solve_spd(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve A X = B for symmetric positive definite A via Cholesky."""
    try:
        L = np.linalg.cholesky(A)
    except LinAlgError as exc:
        raise LinAlgError(f"matrix not positive definite: {exc}") from exc
    y = np.linalg.solve(L, B)
    return np.linalg.solve(L.T, y)


def p_wls(S: np.ndarray, cov: CovarianceEstimate) -> PMatrix:
    """Weighted least squares: P = (S' L S)^-1 S' L with L = diag(1/var)."""
    W = cov.W
    off_diag = W - np.diag(np.diag(W))
    if np.max(np.abs(off_diag)) > 1e-12 * max(np.max(np.abs(W)), 1.0):
        raise ValueError("WLS weights must be diagonal")
    variances = np.diag(W)
    if (variances <= 0).any():
        raise ValueError("WLS variances must be positive")
    lam = 1.0 / variances
    StL = S.T * lam  # S' Lambda
    P = _solve_spd(StL @ S, StL)
    return PMatrix(entries=P, method_tag="WLS")


def p_mint(S: np.ndarray, cov: CovarianceEstimate) -> PMatrix:
    """Trace-minimizing projection: P = (S' W^-1 S)^-1 S' W^-1."""
    W = cov.W
    if np.max(np.abs(W - W.T)) > 1e-10 * max(np.max(np.abs(W)), 1.0):
        raise ValueError("W must be symmetric")
    Winv_S = _solve_spd(W, S)          # W^-1 S
    P = _solve_spd(S.T @ Winv_S, Winv_S.T)  # (S' W^-1 S)^-1 (W^-1 S)'
    tag = "MINT_SHRINK" if cov.estimator == "shrinkage" else "MINT_SAMPLE"
    return PMatrix(entries=P, method_tag=tag)


def reconciled_variance(S: np.ndarray, cov: CovarianceEstimate) -> np.ndarray:
    """Variance of the revised forecasts: S (S' W^-1 S)^-1 S'."""
    Winv_S = _solve_spd(cov.W, S)
    inner = _solve_spd(S.T @ Winv_S, S.T)
    V = S @ inner
    return 0.5 * (V + V.T)  # symmetrize rounding noise


# -- proportion estimators ---------------------------------------------------

def td_proportions_gs1(
    panel: SeriesPanel, parent_id: str, child_ids: list[str]
) -> ProportionVector:
    """Average of weekly child/parent sales ratios.

    Weeks with non-positive parent totals are skipped; failing every week is
    an error (proportions would be 0/0).
    """
    parent = panel.sales[panel.row(parent_id)]
    children = np.vstack([panel.sales[panel.row(c)] for c in child_ids])
    usable = parent > 0
    if not usable.any():
        raise ValueError(f"no week with positive sales at parent {parent_id!r}")
    ratios = children[:, usable] / parent[usable]
    return ProportionVector(values=ratios.mean(axis=1), basis="historical_avg")


def td_proportions_gs2(
    panel: SeriesPanel, parent_id: str, child_ids: list[str]
) -> ProportionVector:
    """Ratio of average child sales to average parent sales."""
    parent = panel.sales[panel.row(parent_id)]
    if parent.mean() <= 0:
        raise ValueError(f"parent {parent_id!r} has non-positive mean sales")
    children = np.vstack([panel.sales[panel.row(c)] for c in child_ids])
    return ProportionVector(values=children.mean(axis=1) / parent.mean(), basis="avg_of_ratios")


def tdfp_proportions(
    base: BaseForecasts, h: int, hier: HierarchySpec
) -> ProportionVector:
    """Forecasted proportions: per bottom node, the product along its
    ancestor path of (node forecast / sum of forecasts one level below the
    next ancestor), renormalized to sum exactly one."""
    fc = {node: base.values[i, h] for i, node in enumerate(base.node_ids)}
    props = []
    for b in hier.bottom_ids:
        path = hier.ancestry(b)  # bottom .. top
        val = 1.0
        for node, parent in zip(path[:-1], path[1:]):
            sibling_sum = sum(fc[c] for c in hier.children_of(parent))
            if sibling_sum <= 0:
                raise ValueError(
                    f"children forecasts of {parent!r} sum to {sibling_sum}; "
                    "forecasted proportions undefined"
                )
            val *= fc[node] / sibling_sum
        props.append(val)
    values = np.asarray(props)
    return ProportionVector(values=values / values.sum(), basis="forecasted")


# -- covariance estimators ---------------------------------------------------

def estimate_w_sample(residuals: np.ndarray) -> CovarianceEstimate:
    """Unbiased sample covariance of the residual columns.

    With fewer columns than series the estimate cannot be positive definite,
    so it falls back to the shrinkage estimator with a warning.
    """
    residuals = np.asarray(residuals, dtype=float)
    m, n = residuals.shape
    if n < 2:
        raise ValueError("need at least 2 residual columns")
    if n < m:
        warnings.warn(
            f"sample covariance of {m} series from only {n} columns is "
            "singular; falling back to the shrinkage estimator",
            RuntimeWarning,
        )
        return estimate_w_shrink(residuals)
    centered = residuals - residuals.mean(axis=1, keepdims=True)
    W = centered @ centered.T / (n - 1)
    return CovarianceEstimate(W=W, estimator="sample")


def shrink_intensity(residuals: np.ndarray) -> float:
    """Shrinkage weight toward the diagonal, on the correlation scale.

    lambda = sum_{i != j} Var(r_ij) / sum_{i != j} r_ij^2, clipped to [0, 1];
    lambda 1 keeps only the diagonal, 0 keeps the sample covariance.
    """
    residuals = np.asarray(residuals, dtype=float)
    m, n = residuals.shape
    centered = residuals - residuals.mean(axis=1, keepdims=True)
    sd = np.sqrt((centered**2).sum(axis=1) / (n - 1))
    if (sd <= 0).any():
        bad = [i for i, s in enumerate(sd) if s <= 0]
        raise ValueError(f"zero-variance residual rows at indices {bad}")
    xs = centered / sd[:, None]
    corr = xs @ xs.T / (n - 1)
    # Var of each correlation coefficient from the products w_t = x_i x_j
    w_bar = corr * (n - 1) / n
    var_corr = np.zeros((m, m))
    for t in range(n):
        dev = np.outer(xs[:, t], xs[:, t]) - w_bar
        var_corr += dev * dev
    var_corr *= n / ((n - 1.0) ** 3)
    off = ~np.eye(m, dtype=bool)
    denom = float((corr[off] ** 2).sum())
    if denom <= 0:
        return 1.0
    lam = float(var_corr[off].sum() / denom)
    return min(max(lam, 0.0), 1.0)


def estimate_w_shrink(
    residuals: np.ndarray, lam: float | None = None
) -> CovarianceEstimate:
    """Shrink the sample covariance toward its diagonal.

    W = lambda diag(sample) + (1 - lambda) sample; the intensity defaults to
    the data-driven value from ``shrink_intensity``.
    """
    residuals = np.asarray(residuals, dtype=float)
    m, n = residuals.shape
    if n < 3:
        raise ValueError("need at least 3 residual columns")
    centered = residuals - residuals.mean(axis=1, keepdims=True)
    sample = centered @ centered.T / (n - 1)
    if (np.diag(sample) <= 0).any():
        bad = [i for i in range(m) if sample[i, i] <= 0]
        raise ValueError(f"zero-variance residual rows at indices {bad}")
    if lam is None:
        lam = shrink_intensity(residuals)
    if not 0.0 <= lam <= 1.0:
        raise ValueError("shrinkage intensity must be in [0, 1]")
    W = lam * np.diag(np.diag(sample)) + (1.0 - lam) * sample
    return CovarianceEstimate(W=W, estimator="shrinkage", shrink_lambda=lam)


def estimate_w_diagonal(residuals: np.ndarray) -> CovarianceEstimate:
    """Diagonal of the sample covariance (per-series residual variances)."""
    residuals = np.asarray(residuals, dtype=float)
    if residuals.shape[1] < 2:
        raise ValueError("need at least 2 residual columns")
    variances = np.var(residuals, axis=1, ddof=1)
    if (variances <= 0).any():
        bad = [i for i, v in enumerate(variances) if v <= 0]
        raise ValueError(f"zero-variance residual rows at indices {bad}")
    return CovarianceEstimate(W=np.diag(variances), estimator="diagonal")


# -- reconciliation ----------------------------------------------------------

def reconcile(
    P: PMatrix,
    S: np.ndarray,
    base_values: np.ndarray,
    node_ids: tuple[str, ...] = (),
) -> ReconciledForecasts:
    """Apply Ytilde = S P Yhat column-wise over the horizon.

    Negative bottom estimates are floored at zero before re-aggregation and
    the flooring is flagged.  Top-down operators keep the base top forecast
    bit-exact (splitting it cannot change it).
    """
    base_values = np.atleast_2d(np.asarray(base_values, dtype=float))
    if base_values.shape[0] != S.shape[0]:
        if base_values.shape[1] == S.shape[0]:  # accept a single horizon row
            base_values = base_values.T
        else:
            raise ValueError(
                f"base forecast rows ({base_values.shape[0]}) do not match "
                f"node count ({S.shape[0]})"
            )
    if P.entries.shape != (S.shape[1], S.shape[0]):
        raise ValueError("P dimensions do not match S")
    bottom = P.entries @ base_values
    floored = bool((bottom < 0).any())
    if floored:
        bottom = np.maximum(bottom, 0.0)
    values = S @ bottom
    if P.method_tag in ("TD_GS1", "TD_GS2", "TDFP") and not floored:
        values[0, :] = base_values[0, :]
    return ReconciledForecasts(
        node_ids=tuple(node_ids),
        values=values,
        bottom_estimates=bottom,
        method_tag=P.method_tag,
        floored=floored,
    )


def conventional_middle_out(
    base_mid: np.ndarray,
    panel: SeriesPanel,
    hier: HierarchySpec,
    train_weeks: int | None = None,
) -> ReconciledForecasts:
    """Middle-out with static historical-average child proportions.

    The top forecast is the sum of the middle forecasts; each middle node's
    forecast is split over its children by average historical ratios.
    """
    mids = hier.nodes_at_level(1)
    base_mid = np.atleast_2d(np.asarray(base_mid, dtype=float))
    if base_mid.shape[0] != len(mids):
        raise ValueError(
            f"need forecasts for {len(mids)} middle nodes, got {base_mid.shape[0]} rows"
        )
    hist = panel if train_weeks is None else SeriesPanel(
        node_ids=panel.node_ids,
        times=panel.times[:train_weeks],
        sales=panel.sales[:, :train_weeks],
        price=panel.price[:, :train_weeks],
    )
    S = summing_matrix(hier)
    bottom = np.zeros((S.shape[1], base_mid.shape[1]))
    bottom_ids = hier.bottom_ids
    for mid_row, mid in enumerate(mids):
        kids = hier.children_of(mid)
        group = disaggregate_group(hist, mid, kids, base_mid[mid_row])
        for child, row in zip(kids, group):
            bottom[bottom_ids.index(child)] = row
    values = S @ bottom
    return ReconciledForecasts(
        node_ids=tuple(hier.node_ids),
        values=values,
        bottom_estimates=bottom,
        method_tag="CMO",
    )


def disaggregate_group(
    panel: SeriesPanel, parent_id: str, child_ids: list[str], parent_forecast: np.ndarray
) -> np.ndarray:
    """Split a parent forecast over its children by GS1 proportions."""
    p = td_proportions_gs1(panel, parent_id, child_ids)
    return np.outer(p.values, parent_forecast)


# -- CSV export --------------------------------------------------------------

def save_p_matrix_csv(P: PMatrix, hier: HierarchySpec, path) -> None:
    """P matrix with node-id row/column headers, for inspection."""
    import csv as _csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["bottom_node"] + hier.node_ids)
        for i, b in enumerate(hier.bottom_ids):
            writer.writerow([b] + [repr(float(v)) for v in P.entries[i]])


def save_reconciled_csv(rec: ReconciledForecasts, hier: HierarchySpec, path) -> None:
    """Reconciled forecasts in long form: node_id, horizon, value."""
    import csv as _csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["node_id", "horizon", "value", "method"])
        for i, node in enumerate(hier.node_ids):
            for h in range(rec.values.shape[1]):
                writer.writerow([node, h + 1, repr(float(rec.values[i, h])), rec.method_tag])
