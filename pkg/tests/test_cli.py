import json
import math
import os

import numpy as np
import pytest

from fbmlab.cli import main


def run(args):
    return main(args)


class TestFbmCommand:
    def test_writes_csv(self, tmp_path):
        code = run(
            ["--out", str(tmp_path), "--seed", "7", "fbm", "--hurst", "0.75",
             "--steps", "128", "--dt", "0.001"]
        )
        assert code == 0
        lines = (tmp_path / "fgn.csv").read_text().strip().split("\n")
        assert len(lines) == 129
        assert lines[0] == "t,increment"

    def test_bad_hurst_exits_2(self, tmp_path, capsys):
        code = run(["--out", str(tmp_path), "fbm", "--hurst", "0.4", "--steps", "16"])
        assert code == 2
        assert "(0.5, 1)" in capsys.readouterr().err

    def test_cholesky_method(self, tmp_path):
        code = run(
            ["--out", str(tmp_path), "--seed", "3", "fbm", "--method", "cholesky",
             "--steps", "64"]
        )
        assert code == 0

    def test_selftest_passes(self, tmp_path, capsys):
        code = run(
            ["--out", str(tmp_path), "--seed", "11", "fbm", "--steps", "128",
             "--selftest", "--replicas", "4000"]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "selftest: pass" in out

    def test_rerun_byte_identical(self, tmp_path):
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        for d in (a_dir, b_dir):
            assert run(["--out", str(d), "--seed", "5", "fbm", "--steps", "64"]) == 0
        assert (a_dir / "fgn.csv").read_bytes() == (b_dir / "fgn.csv").read_bytes()


class TestSimulateCommand:
    def test_linear_forward_run(self, tmp_path):
        code = run(
            ["--out", str(tmp_path), "--seed", "9", "simulate", "--kind", "linear",
             "--t-end", "0.5", "--replicas", "4", "--store-every", "10"]
        )
        assert code == 0
        assert (tmp_path / "trajectory.csv").exists()
        assert (tmp_path / "ensemble_summary.csv").exists()

    def test_zero_noise_rerun_identical(self, tmp_path):
        dirs = [tmp_path / "a", tmp_path / "b"]
        for d in dirs:
            code = run(
                ["--out", str(d), "--seed", "4", "simulate", "--kind", "heat",
                 "--t-end", "0.2", "--replicas", "2", "--store-every", "10",
                 "--noise-scale", "0.0", "--n-modes", "4", "--grid-points", "16",
                 "--dt", "0.002"]
            )
            assert code == 0
        assert (dirs[0] / "trajectory.csv").read_bytes() == (
            dirs[1] / "trajectory.csv"
        ).read_bytes()

    def test_bounded_heat_prints_deltas(self, tmp_path, capsys):
        code = run(
            ["--out", str(tmp_path), "--seed", "4", "simulate", "--kind", "heat",
             "--bounded", "--t-end", "0.4", "--replicas", "3", "--store-every", "10",
             "--n-modes", "4", "--grid-points", "16", "--dt", "0.004"]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "iteration 1: delta" in out

    def test_no_contraction_exits_3(self, tmp_path, capsys):
        code = run(
            ["--out", str(tmp_path), "--seed", "4", "simulate", "--kind", "heat",
             "--bounded", "--t-end", "0.4", "--replicas", "2", "--store-every", "10",
             "--n-modes", "4", "--grid-points", "16", "--dt", "0.004",
             "--drift-gain", "12.0", "--max-iter", "10"]
        )
        assert code == 3
        assert "theta1" in capsys.readouterr().err

    def test_malformed_config_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"kind": "linear",\n  "dt": oops}\n')
        code = run(["--config", str(bad), "--out", str(tmp_path), "simulate"])
        assert code == 2
        err = capsys.readouterr().err
        assert "line 2" in err

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"no_such_key": 1}')
        code = run(["--config", str(bad), "--out", str(tmp_path), "simulate"])
        assert code == 2


class TestConfigPrecedence:
    def test_flags_beat_file_beat_defaults(self, tmp_path):
        # three overlapping keys: steps (flag wins), dt (file wins),
        # t0 (default wins)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"steps": 32, "dt": 0.25}))
        code = run(
            ["--config", str(cfg), "--out", str(tmp_path), "--seed", "2", "fbm",
             "--steps", "16"]
        )
        assert code == 0
        rows = (tmp_path / "fgn.csv").read_text().strip().split("\n")[1:]
        assert len(rows) == 16  # flag beat the file
        t_first = float(rows[0].split(",")[0])
        assert t_first == pytest.approx(0.25)  # file dt beat the default 1e-3


class TestVerifyCommand:
    def test_linear_bound_holds(self, tmp_path):
        code = run(
            ["--out", str(tmp_path), "--seed", "6", "verify", "--bound", "linear",
             "--t-end", "2.0", "--replicas", "30", "--store-every", "20",
             "--dt", "0.002", "--n-modes", "4", "--grid-points", "16"]
        )
        assert code == 0
        payload = json.loads((tmp_path / "verify_linear.json").read_text())
        assert payload["violations"] == 0
        assert payload["statistic"] == "mean-norm"

    def test_dissipativity_bound_holds(self, tmp_path):
        code = run(
            ["--out", str(tmp_path), "--seed", "6", "verify", "--bound",
             "dissipativity", "--t-end", "1.0", "--replicas", "20",
             "--store-every", "10", "--dt", "0.002", "--n-modes", "4",
             "--grid-points", "16"]
        )
        assert code == 0
        payload = json.loads((tmp_path / "verify_dissipativity.json").read_text())
        assert payload["violations"] == 0
        assert payload["certified"]

    def test_convergence_reports_fitted_rate(self, tmp_path):
        code = run(
            ["--out", str(tmp_path), "--seed", "6", "verify", "--bound",
             "convergence", "--t-end", "1.0", "--replicas", "20",
             "--store-every", "10", "--dt", "0.002", "--n-modes", "4",
             "--grid-points", "16"]
        )
        assert code == 0
        payload = json.loads((tmp_path / "verify_convergence.json").read_text())
        assert payload["fitted_rate"] >= payload["theoretical_rate"] - payload[
            "fitted_rate_ci_half_width"
        ]


class TestRecurrenceCommand:
    def test_sine_detects_periods(self, tmp_path):
        code = run(
            ["--out", str(tmp_path), "recurrence", "--signal", "sine", "--epsilon",
             "0.1", "--tau-max", "100", "--t-end", "250", "--tau-step", "0.05"]
        )
        assert code == 0
        payload = json.loads((tmp_path / "recurrence.json").read_text())
        taus = np.asarray(payload["taus"])
        for k in (1, 5, 10):
            assert np.min(np.abs(taus - 2 * math.pi * k)) <= 0.06

    def test_csv_input(self, tmp_path):
        t = np.arange(0.0, 50.0001, 0.01)
        csv = tmp_path / "signal.csv"
        with open(csv, "w") as fh:
            fh.write("t,value\n")
            for ti, vi in zip(t, np.sin(t)):
                fh.write(f"{ti:.17g},{vi:.17g}\n")
        code = run(
            ["--out", str(tmp_path), "recurrence", "--input", str(csv),
             "--epsilon", "0.2", "--tau-max", "20"]
        )
        assert code == 0


class TestExampleCommand:
    def test_mini_pipeline(self, tmp_path):
        out = tmp_path / "ex"
        code = run(
            ["--out", str(out), "--seed", "12", "example", "--t-end", "2.0",
             "--dt", "0.002", "--replicas", "6", "--n-modes", "4",
             "--grid-points", "16"]
        )
        assert code == 0
        for name in (
            "surface.csv",
            "ensemble_summary.csv",
            "conditions.json",
            "dissipativity_report.json",
            "convergence_report.json",
            "recurrence.json",
            "compatibility.json",
        ):
            assert (out / name).exists(), name

    def test_rerun_byte_identical_data(self, tmp_path):
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            code = run(
                ["--out", str(out), "--seed", "12", "example", "--t-end", "1.0",
                 "--dt", "0.002", "--replicas", "4", "--n-modes", "4",
                 "--grid-points", "16"]
            )
            assert code == 0
        for name in ("surface.csv", "ensemble_summary.csv", "dissipativity_report.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_sweep_only(self, tmp_path):
        out = tmp_path / "sweep"
        code = run(["--out", str(out), "example", "--sweep-only"])
        assert code == 0
        lines = (out / "hurst_sweep.csv").read_text().strip().split("\n")
        assert len(lines) == 10
