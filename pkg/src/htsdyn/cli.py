"""Command-line front door: simulate, forecast, evaluate, report.

Runs are driven by a JSON config; every output directory carries a manifest
(config hash, seed, version) and rerunning the same manifest reproduces the
files byte for byte.  Failures are isolated per (method, group) so one bad
fit cannot void a whole run.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import htsdyn
from htsdyn.datasim import SimConfig, derive_group_config, save_truth_csv, simulate
from htsdyn.eval import format_report_grid, report_to_csv, save_report_json
from htsdyn.hierarchy import (
    HierarchySpec,
    SeriesPanel,
    load_hierarchy_csv,
    load_panel_csv,
    save_hierarchy_csv,
    save_panel_csv,
    summing_matrix,
)
from htsdyn.reconcile import ReconciledForecasts
from htsdyn.runner import ALL_METHODS, run_method, run_panels
from htsdyn.base_forecast import BaseForecasts, forecast_all_nodes


@dataclass
class RunConfig:
    """Deserialized run configuration with defaults filled in."""

    out_dir: str
    methods: tuple = ALL_METHODS
    train_weeks: int = 112
    horizon: int = 8
    seed: int = 0
    n_groups: int = 61
    hierarchy_csv: str | None = None
    panel_csv: str | None = None
    panel_dir: str | None = None
    base_forecasts_csv: str | None = None
    simulator: dict = field(default_factory=dict)
    dhf: dict = field(default_factory=dict)
    jobs: int = 1

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        raw.update(overrides or {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise SystemExit(f"config error: unknown keys {sorted(unknown)}")
        if "out_dir" not in raw:
            raise SystemExit("config error: out_dir is required")
        cfg = cls(**{k: v for k, v in raw.items() if k in known})
        cfg.methods = tuple(cfg.methods)
        if not cfg.methods:
            raise SystemExit("config error: method list is empty")
        bad = [m for m in cfg.methods if m not in ALL_METHODS]
        if bad:
            raise SystemExit(
                f"config error: unknown methods {bad}; valid: {', '.join(ALL_METHODS)}"
            )
        return cfg

    def canonical(self) -> str:
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__}
        doc["methods"] = list(self.methods)
        return json.dumps(doc, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def sim_config(self, seed: int | None = None) -> SimConfig:
        fields = dict(self.simulator)
        fields.setdefault("seed", self.seed if seed is None else seed)
        return SimConfig(**fields)


def atomic_write_text(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)


def write_manifest(cfg: RunConfig, out_dir: Path, command: str) -> None:
    manifest = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "version": htsdyn.__version__,
    }
    atomic_write_text(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_simulate(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        groups_dir = out_dir / "groups"
        groups_dir.mkdir(exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return 1
    template = cfg.sim_config()
    width = len(str(max(cfg.n_groups - 1, 1)))
    hier = None
    try:
        for g in range(cfg.n_groups):
            out = simulate(derive_group_config(template, cfg.seed, g))
            hier = out.hier
            gdir = groups_dir / f"g{g:0{width}d}"
            gdir.mkdir(exist_ok=True)
            _atomic_csv(gdir / "panel.csv", save_panel_csv, out.panel)
            _atomic_csv(gdir / "truth.csv", save_truth_csv, out)
        _atomic_csv(out_dir / "hierarchy.csv", save_hierarchy_csv, hier)
        write_manifest(cfg, out_dir, "simulate")
    except OSError as exc:
        print(f"error: I/O failure under {out_dir}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {cfg.n_groups} groups to {groups_dir}")
    return 0


def _atomic_csv(path: Path, writer, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    writer(obj, tmp)
    os.replace(tmp, path)


def load_groups(cfg: RunConfig):
    """Hierarchy plus {group_id: panel} from the configured inputs."""
    if cfg.panel_dir is not None:
        root = Path(cfg.panel_dir)
        hier_path = (
            Path(cfg.hierarchy_csv) if cfg.hierarchy_csv else root / "hierarchy.csv"
        )
        if not hier_path.exists():
            raise FileNotFoundError(f"hierarchy file not found: {hier_path}")
        hier = load_hierarchy_csv(hier_path)
        groups_dir = root / "groups"
        if not groups_dir.exists():
            raise FileNotFoundError(f"groups directory not found: {groups_dir}")
        panels = {}
        for gdir in sorted(p for p in groups_dir.iterdir() if p.is_dir()):
            panel_path = gdir / "panel.csv"
            if not panel_path.exists():
                raise FileNotFoundError(f"panel file not found: {panel_path}")
            panels[gdir.name] = load_panel_csv(panel_path, hier)
        if not panels:
            raise FileNotFoundError(f"no group subdirectories under {groups_dir}")
        return hier, panels
    if cfg.panel_csv is None or cfg.hierarchy_csv is None:
        raise FileNotFoundError(
            "config must provide panel_dir, or both hierarchy_csv and panel_csv"
        )
    for p in (cfg.hierarchy_csv, cfg.panel_csv):
        if not Path(p).exists():
            raise FileNotFoundError(f"input file not found: {p}")
    hier = load_hierarchy_csv(cfg.hierarchy_csv)
    return hier, {"g0": load_panel_csv(cfg.panel_csv, hier)}


def _check_window(cfg: RunConfig, panels) -> None:
    for gid, panel in panels.items():
        if cfg.train_weeks + cfg.horizon > panel.n_weeks:
            raise SystemExit(
                f"config error: train_weeks + horizon = "
                f"{cfg.train_weeks + cfg.horizon} exceeds panel length "
                f"{panel.n_weeks} (group {gid})"
            )


def cmd_evaluate(cfg: RunConfig) -> int:
    try:
        hier, panels = load_groups(cfg)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _check_window(cfg, panels)
    report, failures = run_panels(
        panels, hier, cfg.methods, cfg.train_weeks, cfg.horizon, cfg.seed,
        dhf_lags=int(cfg.dhf.get("lags", 3)),
        dhf_folds=int(cfg.dhf.get("folds", 2)),
        grid_profile=cfg.dhf.get("grid_profile", "single"),
        jobs=cfg.jobs,
    )
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_csv(out_dir / "report.csv", report_to_csv, report)
    _atomic_csv(out_dir / "report.json", save_report_json, report)
    write_manifest(cfg, out_dir, "evaluate")
    print(format_report_grid(report))
    for (group, method), msg in sorted(failures.items()):
        print(f"FAILED {method} on {group}: {msg}", file=sys.stderr)
    return 1 if failures else 0


def _load_base_forecasts(path, hier: HierarchySpec, horizon: int) -> BaseForecasts:
    """Optional override: CSV node_id,horizon,value pinning the base forecasts."""
    values = np.full((hier.n_nodes, horizon), np.nan)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header[:3]] != ["node_id", "horizon", "value"]:
            raise ValueError(f"{path}: expected header 'node_id,horizon,value'")
        for row in reader:
            if not row:
                continue
            values[hier.index_of(row[0]), int(row[1]) - 1] = float(row[2])
    if np.isnan(values).any():
        raise ValueError(f"{path}: incomplete node x horizon grid")
    return BaseForecasts(
        node_ids=tuple(hier.node_ids),
        values=values,
        residuals=np.zeros((hier.n_nodes, 0)),
        orders=tuple(0 for _ in hier.node_ids),
    )


def cmd_forecast(cfg: RunConfig, method: str) -> int:
    if method not in ALL_METHODS:
        print(
            f"error: unknown method {method!r}; valid: {', '.join(ALL_METHODS)}",
            file=sys.stderr,
        )
        return 2
    try:
        hier, panels = load_groups(cfg)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _check_window(cfg, panels)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    S = summing_matrix(hier)
    failures = 0
    for gid, panel in sorted(panels.items()):
        try:
            base = None
            if cfg.base_forecasts_csv:
                base = _load_base_forecasts(cfg.base_forecasts_csv, hier, cfg.horizon)
            rec = run_method(
                method, panel, hier, cfg.train_weeks, cfg.horizon, cfg.seed,
                base=base,
                dhf_lags=int(cfg.dhf.get("lags", 3)),
                dhf_folds=int(cfg.dhf.get("folds", 2)),
                grid_profile=cfg.dhf.get("grid_profile", "single"),
            )
        except Exception as exc:
            print(f"FAILED {method} on {gid}: {exc}", file=sys.stderr)
            failures += 1
            continue
        resid = np.abs(rec.values - S @ rec.bottom_estimates)
        rel = float(np.max(resid / np.maximum(np.abs(rec.values), 1.0)))
        path = out_dir / f"forecast_{method}_{gid}.csv"
        _atomic_csv(path, _forecast_writer(hier, rel), rec)
        print(f"{gid}: wrote {path} (max coherence residual {rel:.2e})")
    write_manifest(cfg, out_dir, "forecast")
    return 1 if failures else 0


def _forecast_writer(hier: HierarchySpec, coherence_residual: float):
    def write(rec: ReconciledForecasts, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node_id", "horizon", "value", "method", "max_coherence_residual"])
            for i, node in enumerate(hier.node_ids):
                for h in range(rec.values.shape[1]):
                    writer.writerow(
                        [node, h + 1, repr(float(rec.values[i, h])), rec.method_tag,
                         repr(coherence_residual)]
                    )

    return write


def cmd_report(cfg: RunConfig) -> int:
    path = Path(cfg.out_dir) / "report.json"
    if not path.exists():
        print(f"error: report not found: {path}", file=sys.stderr)
        return 1
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    from htsdyn.eval import EvalReport

    report = EvalReport()
    methods, levels, windows = [], [], []
    for row in doc["medians"]:
        key = (row["method"], row["level"], row["window"])
        report.medians[key] = row["median_smape"]
        methods.append(row["method"])
        levels.append(row["level"])
        windows.append(row["window"])
    report.methods = tuple(dict.fromkeys(methods))
    report.levels = tuple(dict.fromkeys(levels))
    report.windows = tuple(dict.fromkeys(windows))
    print(format_report_grid(report))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="htsdyn",
        description="Hierarchical forecasting with dynamic ML disaggregation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "evaluate", "report"):
        p = sub.add_parser(name)
        _common_flags(p)
    p = sub.add_parser("forecast")
    _common_flags(p)
    p.add_argument("--method", required=True, help="one reconciliation method")
    args = parser.parse_args(argv)

    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.methods is not None:
        overrides["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    cfg = RunConfig.from_file(args.config, overrides)

    if args.command == "simulate":
        return cmd_simulate(cfg)
    if args.command == "evaluate":
        return cmd_evaluate(cfg)
    if args.command == "forecast":
        return cmd_forecast(cfg, args.method)
    return cmd_report(cfg)


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="path to the run-config JSON")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("--jobs", type=int, default=None, help="parallel group workers")
    p.add_argument("--methods", default=None, help="comma-separated method list")


if __name__ == "__main__":
    sys.exit(main())
