"""Forecast scoring: sMAPE per node, medians by level and horizon window.

The report follows the grid shape methods x {top, middle, bottom} x
{h=1, h=1..4, h=1..8}, with one median over the pooled (group, node) scores
per cell and the raw scores retained for dispersion analysis.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from htsdyn.hierarchy import HierarchySpec
from htsdyn.reconcile import ReconciledForecasts

DEFAULT_WINDOWS = (1, 4, 8)

LEVEL_NAMES = ("top", "middle", "bottom")


def smape(actual: np.ndarray, forecast: np.ndarray) -> float:
    """Symmetric MAPE in percent, bounded by 200.

    Terms where actual + forecast is zero contribute zero, so a perfect
    forecast of a zero week scores 0 rather than exploding.
    """
    actual = np.asarray(actual, dtype=float)
    forecast = np.asarray(forecast, dtype=float)
    if actual.shape != forecast.shape:
        raise ValueError("actual and forecast lengths differ")
    if actual.size == 0:
        raise ValueError("empty vectors")
    denom = np.abs(actual + forecast)
    terms = np.where(denom > 0, np.abs(actual - forecast) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(2.0 / actual.size * terms.sum() * 100.0)


def window_label(length: int) -> str:
    return "h1" if length == 1 else f"h1-{length}"


def level_name(level: int, bottom_level: int) -> str:
    if level == 0:
        return "top"
    if level == bottom_level:
        return "bottom"
    return "middle"


@dataclass
class EvalReport:
    """Median sMAPE per (method, level, window) plus the raw pooled scores."""

    medians: dict = field(default_factory=dict)       # (method, level, window) -> float
    raw_scores: dict = field(default_factory=dict)    # same key -> list of (group, node, score)
    methods: tuple = ()
    levels: tuple = ()
    windows: tuple = ()

    def median(self, method: str, level: str, window: str) -> float:
        return self.medians[(method, level, window)]


def evaluate(
    method_results: dict,
    test_actuals: dict,
    hier: HierarchySpec,
    windows=DEFAULT_WINDOWS,
) -> EvalReport:
    """Score every method over every group.

    ``method_results`` maps method -> {group_id -> ReconciledForecasts};
    ``test_actuals`` maps group_id -> (nodes x horizon) actuals aligned with
    the hierarchy's node order.
    """
    node_levels = hier.level_index()
    bottom = hier.bottom_level
    horizon = max(windows)
    for group, actual in test_actuals.items():
        if actual.shape[1] < horizon:
            raise ValueError(
                f"group {group!r} provides {actual.shape[1]} test steps, "
                f"need {horizon}"
            )
    level_labels = [level_name(lv, bottom) for lv in node_levels]
    present_levels = tuple(lv for lv in LEVEL_NAMES if lv in level_labels)
    win_labels = tuple(window_label(w) for w in windows)

    report = EvalReport(
        methods=tuple(sorted(method_results)),
        levels=present_levels,
        windows=win_labels,
    )
    for method in report.methods:
        per_group = method_results[method]
        scores: dict = {(lv, wl): [] for lv in present_levels for wl in win_labels}
        for group, rec in per_group.items():
            actual = test_actuals[group]
            if rec.values.shape != actual[:, : rec.values.shape[1]].shape:
                raise ValueError(
                    f"method {method!r}, group {group!r}: forecast shape "
                    f"{rec.values.shape} does not match actuals"
                )
            for i, node in enumerate(hier.node_ids):
                for w, wl in zip(windows, win_labels):
                    score = smape(actual[i, :w], rec.values[i, :w])
                    scores[(level_labels[i], wl)].append((group, node, score))
        for (lv, wl), triples in scores.items():
            key = (method, lv, wl)
            report.raw_scores[key] = triples
            report.medians[key] = float(np.median([s for _, _, s in triples]))
    return report


@dataclass(frozen=True)
class RankEntry:
    method: str
    median: float
    tied: bool


def rank_methods(report: EvalReport) -> dict:
    """Methods per (level, window), ascending by median sMAPE.

    Ties are broken alphabetically and flagged on every tied entry.
    """
    if not report.medians:
        raise ValueError("empty report")
    out: dict = {}
    for lv in report.levels:
        for wl in report.windows:
            rows = [(report.medians[(m, lv, wl)], m) for m in report.methods]
            rows.sort(key=lambda t: (t[0], t[1]))
            medians = [r[0] for r in rows]
            out[(lv, wl)] = [
                RankEntry(method=m, median=v, tied=medians.count(v) > 1)
                for v, m in rows
            ]
    return out


def report_to_csv(report: EvalReport, path) -> None:
    """Long format: method, level, window, median_smape."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "level", "window", "median_smape"])
        for method in report.methods:
            for lv in report.levels:
                for wl in report.windows:
                    writer.writerow([method, lv, wl, repr(report.medians[(method, lv, wl)])])


def report_to_json_dict(report: EvalReport) -> dict:
    return {
        "medians": [
            {"method": m, "level": lv, "window": wl, "median_smape": report.medians[(m, lv, wl)]}
            for m in report.methods
            for lv in report.levels
            for wl in report.windows
        ],
        "raw_scores": [
            {"method": m, "level": lv, "window": wl, "group": g, "node": node, "smape": s}
            for (m, lv, wl), triples in sorted(report.raw_scores.items())
            for g, node, s in triples
        ],
    }


def save_report_json(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_json_dict(report), fh, indent=2, sort_keys=True)


def format_report_grid(report: EvalReport) -> str:
    """Plain-text grid: one row per method, level x window columns."""
    header = ["method"] + [f"{lv}/{wl}" for wl in report.windows for lv in report.levels]
    widths = [max(12, len(h) + 2) for h in header]
    lines = ["".join(h.ljust(w) for h, w in zip(header, widths))]
    for m in report.methods:
        cells = [m]
        for wl in report.windows:
            for lv in report.levels:
                cells.append(f"{report.medians[(m, lv, wl)]:.2f}")
        lines.append("".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)
