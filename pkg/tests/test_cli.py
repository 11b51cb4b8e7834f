import json
import subprocess
import sys

import pytest

from specflow.cli import SELFTEST_TOLERANCES, main, run_selftest


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def strip_stamp(text):
    data = json.loads(text)
    data.pop("timestamp", None)
    return data


class TestCommands:
    def test_cf(self, capsys):
        code, out, _ = run(["cf", "--depth", "8"], capsys)
        assert code == 0
        rep = json.loads(out)
        assert rep["q"] == [1, 1, 2, 3, 5, 8, 13, 21, 34]
        assert rep["denominator_bounds_hold"]

    def test_birkhoff_from_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"alpha": "sqrt2m1", "n": [1, 100], "x": 0.25}))
        code, out, _ = run(["birkhoff", "--config", str(cfg)], capsys)
        assert code == 0
        rows = json.loads(out)["rows"]
        assert rows[0]["naive"] == pytest.approx(1.25)
        assert rows[1]["naive"] == pytest.approx(rows[1]["fast"], rel=1e-12)

    def test_csv_output(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"times": [0, 0.5, 2.5]}))
        code, _, _ = run(["flow-orbit", "--config", str(cfg), "--out", str(tmp_path / "o"),
                          "--format", "csv"], capsys)
        assert code == 0
        lines = (tmp_path / "o" / "flow_orbit.csv").read_text().splitlines()
        assert lines[0] == "t,x,s" and len(lines) == 4

    def test_section_return(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"count": 6}))
        code, out, _ = run(["section-return", "--config", str(cfg)], capsys)
        assert code == 0
        assert json.loads(out)["max_abs_err"] < 1e-9

    def test_trow_check(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"queries": 40, "n_max": 500}))
        code, out, _ = run(["trow-check", "--config", str(cfg)], capsys)
        assert code == 0 and json.loads(out)["pass"]


class TestErrors:
    def test_missing_config(self, capsys):
        code, _, err = run(["cf", "--config", "/nonexistent/c.json"], capsys)
        assert code == 2
        assert json.loads(err)["error"] == "ConfigError"

    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(["cf", "--config", str(bad)], capsys)[0] == 2

    def test_bad_roof(self, tmp_path, capsys):
        roof = tmp_path / "roof.json"
        roof.write_text(json.dumps({"breakpoints": [0.1], "jumps": "x"}))
        code, _, err = run(["birkhoff", "--roof", str(roof)], capsys)
        assert code == 2
        assert json.loads(err)["error"] == "RoofSpecError"

    def test_rational_alpha_is_domain_error(self, capsys):
        code, _, err = run(["cf", "--alpha", "0.5", "--depth", "3"], capsys)
        assert code == 3
        assert json.loads(err)["error"] == "RationalAlphaError"

    def test_bad_threads(self, capsys):
        assert run(["cf", "--threads", "0"], capsys)[0] == 2


class TestSelftest:
    def test_passes_with_defaults(self):
        rep = run_selftest(0)
        assert rep["pass"]
        assert {c["check"] for c in rep["checks"]} == set(SELFTEST_TOLERANCES)

    def test_corrupted_tolerance_fails(self, capsys):
        code, _, err = run(["selftest", "--set", "cocycle_identity=0"], capsys)
        assert code == 4
        assert "FAIL cocycle_identity" in err

    def test_unknown_check(self, capsys):
        assert run(["selftest", "--set", "nope=1"], capsys)[0] == 2


class TestDeterminism:
    def test_rigidity_reports_repeat(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"times": {"start": 10, "stop": 40, "step": 1}, "grid_size": 1000}))
        outs = []
        for tag in ("a", "b"):
            d = tmp_path / tag
            assert run(["rigidity-scan", "--config", str(cfg), "--out", str(d), "--format", "csv"],
                       capsys)[0] == 0
            outs.append(((d / "rigidity.csv").read_bytes(), strip_stamp((d / "rigidity.json").read_text())))
        assert outs[0] == outs[1]

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "specflow", "cf", "--depth", "5"],
                              capture_output=True, text=True, check=False)
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["q"] == [1, 1, 2, 3, 5, 8]
