"""CLI subcommands: file layouts, manifests, reproducibility, error paths."""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from htsdyn.cli import main


def run_cli(*argv):
    return main(list(argv))


def write_config(path: Path, **fields) -> Path:
    cfg = path / "config.json"
    cfg.write_text(json.dumps(fields, indent=2))
    return cfg


@pytest.fixture
def sim_config(tmp_path):
    out = tmp_path / "out"
    return write_config(
        tmp_path,
        out_dir=str(out),
        panel_dir=str(out),
        methods=["BU", "CMO", "DHF_GBT"],
        n_groups=2,
        seed=3,
        simulator={"n_weeks": 60},
        train_weeks=52,
        horizon=8,
    ), out


class TestSimulate:
    def test_writes_expected_layout(self, sim_config):
        cfg, out = sim_config
        assert run_cli("simulate", "--config", str(cfg)) == 0
        assert (out / "hierarchy.csv").exists()
        assert (out / "manifest.json").exists()
        groups = sorted(p.name for p in (out / "groups").iterdir())
        assert groups == ["g0", "g1"]
        for g in groups:
            assert (out / "groups" / g / "panel.csv").exists()
            assert (out / "groups" / g / "truth.csv").exists()

    def test_rerun_byte_identical(self, sim_config):
        cfg, out = sim_config
        run_cli("simulate", "--config", str(cfg))
        first = (out / "groups" / "g0" / "panel.csv").read_bytes()
        manifest1 = (out / "manifest.json").read_bytes()
        run_cli("simulate", "--config", str(cfg))
        assert (out / "groups" / "g0" / "panel.csv").read_bytes() == first
        assert (out / "manifest.json").read_bytes() == manifest1

    def test_unwritable_output_dir(self, tmp_path):
        cfg = write_config(
            tmp_path, out_dir="/proc/no_such_place/x", n_groups=1, seed=0
        )
        assert run_cli("simulate", "--config", str(cfg)) == 1

    def test_manifest_contents(self, sim_config):
        cfg, out = sim_config
        run_cli("simulate", "--config", str(cfg))
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["seed"] == 3
        assert len(manifest["config_hash"]) == 64
        assert "version" in manifest


class TestEvaluate:
    def test_report_files_and_grid(self, sim_config, capsys):
        cfg, out = sim_config
        run_cli("simulate", "--config", str(cfg))
        assert run_cli("evaluate", "--config", str(cfg)) == 0
        captured = capsys.readouterr()
        assert "bottom/h1-8" in captured.out
        assert (out / "report.csv").exists()
        report = json.loads((out / "report.json").read_text())
        methods = {row["method"] for row in report["medians"]}
        assert methods == {"BU", "CMO", "DHF_GBT"}
        # 3 methods x 3 levels x 3 windows
        assert len(report["medians"]) == 27

    def test_rerun_byte_identical_reports(self, sim_config):
        cfg, out = sim_config
        run_cli("simulate", "--config", str(cfg))
        run_cli("evaluate", "--config", str(cfg))
        r1 = (out / "report.csv").read_bytes()
        j1 = (out / "report.json").read_bytes()
        run_cli("evaluate", "--config", str(cfg))
        assert (out / "report.csv").read_bytes() == r1
        assert (out / "report.json").read_bytes() == j1

    def test_method_override_and_unknown_method(self, sim_config):
        cfg, _ = sim_config
        with pytest.raises(SystemExit, match="unknown methods"):
            run_cli("evaluate", "--config", str(cfg), "--methods", "BU,NOPE")

    def test_missing_panels_reported(self, tmp_path):
        cfg = write_config(
            tmp_path,
            out_dir=str(tmp_path / "nowhere"),
            panel_dir=str(tmp_path / "nowhere"),
            methods=["BU"],
        )
        assert run_cli("evaluate", "--config", str(cfg)) == 1


class TestForecast:
    def test_bu_with_pinned_base_forecasts(self, tmp_path):
        # 3-node fixture: base (10, 4, 4) must come out as (8, 4, 4)
        hier_csv = tmp_path / "hier.csv"
        hier_csv.write_text("parent,child\nT,A\nT,B\n")
        panel_csv = tmp_path / "panel.csv"
        rows = ["week,node_id,sales,price"]
        rng = np.random.default_rng(0)
        for week in range(1, 41):
            a = float(rng.uniform(3.0, 5.0))
            b = float(rng.uniform(3.0, 5.0))
            rows += [
                f"{week},T,{a + b},10.0",
                f"{week},A,{a},10.0",
                f"{week},B,{b},10.0",
            ]
        panel_csv.write_text("\n".join(rows) + "\n")
        base_csv = tmp_path / "base.csv"
        lines = ["node_id,horizon,value"]
        for h in range(1, 9):
            lines += [f"T,{h},10.0", f"A,{h},4.0", f"B,{h},4.0"]
        base_csv.write_text("\n".join(lines) + "\n")

        out = tmp_path / "out"
        cfg = write_config(
            tmp_path,
            out_dir=str(out),
            hierarchy_csv=str(hier_csv),
            panel_csv=str(panel_csv),
            base_forecasts_csv=str(base_csv),
            methods=["BU"],
            train_weeks=32,
            horizon=8,
        )
        assert run_cli("forecast", "--config", str(cfg), "--method", "BU") == 0
        data = (out / "forecast_BU_g0.csv").read_text().splitlines()
        assert data[0].startswith("node_id,horizon,value,method")
        first = {tuple(line.split(",")[:2]): line.split(",")[2] for line in data[1:]}
        assert float(first[("T", "1")]) == 8.0
        assert float(first[("A", "1")]) == 4.0
        assert float(first[("B", "1")]) == 4.0
        # coherence summary column present and tiny
        assert float(data[1].split(",")[4]) <= 1e-8

    def test_unknown_method_usage_error(self, sim_config):
        cfg, _ = sim_config
        assert run_cli("forecast", "--config", str(cfg), "--method", "XX") == 2

    def test_missing_panel_file(self, tmp_path):
        cfg = write_config(
            tmp_path,
            out_dir=str(tmp_path / "o"),
            hierarchy_csv=str(tmp_path / "missing_h.csv"),
            panel_csv=str(tmp_path / "missing_p.csv"),
            methods=["BU"],
        )
        assert run_cli("forecast", "--config", str(cfg), "--method", "BU") == 1


class TestReport:
    def test_renders_saved_report(self, sim_config, capsys):
        cfg, _ = sim_config
        run_cli("simulate", "--config", str(cfg))
        run_cli("evaluate", "--config", str(cfg))
        capsys.readouterr()
        assert run_cli("report", "--config", str(cfg)) == 0
        assert "DHF_GBT" in capsys.readouterr().out

    def test_missing_report(self, tmp_path):
        cfg = write_config(tmp_path, out_dir=str(tmp_path / "empty"), methods=["BU"])
        assert run_cli("report", "--config", str(cfg)) == 1


def test_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "htsdyn.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "simulate" in proc.stdout
