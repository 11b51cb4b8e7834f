"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line (shown in the pytest terminal
summary, or printed when the file is run as a script) and then asserts.
Tolerances are fixed; a failing criterion is left failing.
"""
import json
import math
import os
import statistics
import time

import numpy as np
import pytest

from specflow.arithmetic import cf_expand, check_denominator_bounds
from specflow.cli import main as cli_main
from specflow.cocycle import (ac_uniform_smallness, birkhoff_fast, birkhoff_naive,
                              birkhoff_pl_exact, pl_difference)
from specflow.poincare import (PlanarState, density_flux_divergence, first_return_closed,
                               first_return_numeric, integrate, safe_thetas)
from specflow.roof import load_roof, roof_from_parts, trig

RESULTS: list[str] = []

GOLDEN = cf_expand("golden", 40)
SILVER = cf_expand("sqrt2m1", 40)
CANON = load_roof("canonical")


def record(number, ok, detail, seconds):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail} ({seconds:.1f} s)"
    RESULTS.append(line)
    print(line)
    return ok


def _strip_stamp(path):
    data = json.loads(path.read_text())
    data.pop("timestamp", None)
    return json.dumps(data, sort_keys=True)


# runs shared between the scan criteria and the determinism criterion
RATNER_CONFIG = {"alpha": "golden", "depth": 40, "roof": "canonical", "epsilon": 0.1, "N": 10,
                 "gamma": 1.0, "pairs": 1000, "seed": 20240601, "keep_rows": True}
RIGIDITY_CONFIG = {"alpha": "golden", "depth": 40, "roof": "canonical", "epsilon": 1e-3,
                   "grid_size": 10_000, "times": {"start": 10, "stop": 1000, "step": 1}}


def _cli_run(tmp_root, name, command, config, fmt="json"):
    cfg = tmp_root / f"{name}.config.json"
    cfg.write_text(json.dumps(config))
    out = tmp_root / name
    code = cli_main([command, "--config", str(cfg), "--out", str(out), "--format", fmt,
                     "--threads", str(os.cpu_count() or 1)])
    return code, out


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return {"root": tmp_path_factory.mktemp("acceptance")}


def test_c01_cocycle_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for rot in (GOLDEN, SILVER):
        for _ in range(1000):
            m, n = (int(v) for v in rng.integers(-1000, 1001, 2))
            x = float(rng.random())
            lhs = birkhoff_naive(rot, CANON, m + n, x)
            rhs = birkhoff_naive(rot, CANON, m, x) + birkhoff_naive(rot, CANON, n, rot.rotate(x, m))
            worst = max(worst, abs(lhs - rhs))
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and dt < 10
    assert record(1, ok, f"cocycle identity max err {worst:.2e} (tol 1e-9, 2x1000 triples)", dt)


def test_c02_jump_count_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    f_pl, _ = CANON.decompose()
    worked = pl_difference(GOLDEN, f_pl, 3, 0.3, 0.4)
    worst = 0.0
    done = 0
    while done < 10_000:
        n = int(rng.integers(0, 10_001))
        x, y = float(rng.random()), float(rng.random())
        if x == y:
            continue
        lhs = pl_difference(GOLDEN, f_pl, n, x, y)
        rhs = birkhoff_naive(GOLDEN, f_pl, n, y) - birkhoff_naive(GOLDEN, f_pl, n, x)
        worst = max(worst, abs(lhs - rhs))
        done += 1
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and abs(worked + 0.7) < 1e-9 and dt < 30
    assert record(2, ok, f"n S l - dbar vs naive max err {worst:.2e}; worked case {worked:.15f}", dt)


def test_c03_fast_matches_naive():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    mixed = roof_from_parts([0.0, 0.37], [1.0, -0.4], 1.6, [trig(0.08, 2, 0.4)])
    worst = 0.0
    for i in range(10_000):
        f = CANON if i % 2 == 0 else mixed
        n = int(rng.integers(-100_000, 100_001))
        x = float(rng.random())
        a, b = birkhoff_naive(GOLDEN, f, n, x), birkhoff_fast(GOLDEN, f, n, x)
        worst = max(worst, abs(a - b) / max(1.0, abs(a)))

    def timed(fn):
        reps = []
        for _ in range(7):
            s = time.perf_counter()
            fn(GOLDEN, CANON, 100_000, 0.123)
            reps.append(time.perf_counter() - s)
        return statistics.median(reps)

    speedup = timed(birkhoff_naive) / timed(birkhoff_pl_exact)
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and speedup >= 20 and dt < 60
    assert record(3, ok, f"fast/naive max rel err {worst:.2e}; speedup at n=1e5 {speedup:.0f}x", dt)


def test_c04_denominator_bounds():
    t0 = time.perf_counter()
    bad = 0
    rows = 0
    for name in ("golden", "sqrt2m1"):
        for row in check_denominator_bounds(cf_expand(name, 36)):
            rows += 1
            bad += not (row["lower"] and row["upper"] and row["norm_bounds"] and row["recurrence"])
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 1
    assert record(4, ok, f"exact denominator bounds: {rows - bad}/{rows} rows hold (n <= 35)", dt)


def test_c05_ratner_scan(runs):
    t0 = time.perf_counter()
    code, out = _cli_run(runs["root"], "ratner_a", "ratner-scan", RATNER_CONFIG)
    dt = time.perf_counter() - t0
    rep = json.loads((out / "ratner.json").read_text())
    cfg = rep["config"]
    rows = rep["rows"]
    D = set(cfg["D"])
    per_pair = all(
        r["ok"] and r["ratio"] >= cfg["kappa"] and r["d_constant"] and r["d"] in D
        and abs(abs(r["shift"]) - abs(cfg["p"] - r["d"])) < 1e-12 and r["hit_fraction"] > 0.9
        for r in rows)
    ok = (code == 0 and len(rows) == 1000 and per_pair and rep["success_rate"] == 1.0
          and abs(cfg["kappa"] - 0.01) < 1e-15 and abs(cfg["delta"] - 1.9349e-4) < 1e-8
          and cfg["p"] == 0.5 and D == {0.0, 1.0, 2.0, 3.0, 4.0, 5.0} and dt < 300)
    hit_min = min(r["hit_fraction"] for r in rows) if rows else float("nan")
    runs["ratner"] = out
    assert record(5, ok, f"witnesses {rep['success_rate'] * 1000:.0f}/1000, kappa {cfg['kappa']}, "
                         f"delta {cfg['delta']:.6e}, min hit fraction {hit_min:.4f}", dt)


def test_c06_ac_smallness_trend():
    t0 = time.perf_counter()
    g = roof_from_parts([], [], 0.0, [trig(0.1, 1)])
    vals = [ac_uniform_smallness(GOLDEN, g, s) for s in range(4, 11)]
    dt = time.perf_counter() - t0
    ok = all(b < a for a, b in zip(vals, vals[1:])) and dt < 120
    assert record(6, ok, "sup |g^(n)(y) - g^(n)(x)| for s=4..10: "
                  + ", ".join(f"{v:.4f}" for v in vals), dt)


def test_c07_non_rigidity(runs):
    t0 = time.perf_counter()
    code, out = _cli_run(runs["root"], "rigidity_a", "rigidity-scan", RIGIDITY_CONFIG, fmt="csv")
    summary = json.loads((out / "rigidity.json").read_text())
    mu = np.loadtxt(out / "rigidity.csv", delimiter=",", skiprows=1, usecols=2)
    control_cfg = dict(RIGIDITY_CONFIG, roof="constant")
    code2, out2 = _cli_run(runs["root"], "rigidity_control", "rigidity-scan", control_cfg, fmt="csv")
    control = np.loadtxt(out2 / "rigidity.csv", delimiter=",", skiprows=1, usecols=2)
    dt = time.perf_counter() - t0
    ok = (code == 0 and code2 == 0 and mu.size == 991 and np.all(mu <= 0.15)
          and control.size == 991 and np.all(control == 1.0) and dt < 600)
    runs["rigidity"] = out
    assert record(7, ok, f"sup mu_hat(B_t) {summary['sup_mu_hat']:.4f} at t={summary['argmax_t']:g} "
                         f"(bound 0.15); constant roof min {control.min():.3f}", dt)


def test_c08_hamiltonian():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    starts = 0
    while starts < 100:
        x, y = rng.uniform(-1, 2.5), rng.uniform(-1.5, 1.5)
        if math.hypot(x, y) < 0.1:
            continue
        starts += 1
        H = integrate(PlanarState(x, y), 10.0, tol=1e-9).H
        worst = max(worst, float(np.max(np.abs(H - H[0])) / abs(H[0])))
    px, py = rng.uniform(-1, 2.5, 20_000), rng.uniform(-1.5, 1.5, 20_000)
    keep = np.hypot(px, py) >= 0.1
    px, py = px[keep][:10_000], py[keep][:10_000]
    div = float(np.max(np.abs(density_flux_divergence(px, py))))
    dt = time.perf_counter() - t0
    ok = worst < 1e-8 and div < 1e-10 and px.size == 10_000 and dt < 60
    assert record(8, ok, f"relative H drift {worst:.2e} (100 starts, T=10); "
                         f"max |div(rho F)| {div:.2e} (10^4 points)", dt)


def test_c09_return_time():
    t0 = time.perf_counter()
    worst = 0.0
    thetas = safe_thetas(100)
    for th in thetas:
        ev = first_return_numeric("normalized", 0.1, float(th))
        worst = max(worst, abs(ev.return_time - first_return_closed(0.1, float(th))))
    dt = time.perf_counter() - t0
    ok = worst < 1e-4 and thetas.size == 100 and dt < 60
    assert record(9, ok, f"|tau - (-r^2 cos 2theta)| max {worst:.2e} over 100 angles", dt)


def test_c10_determinism(runs):
    if "ratner" not in runs or "rigidity" not in runs:
        record(10, False, "criteria 5 and 7 must run first", 0.0)
        pytest.fail("criteria 5 and 7 did not produce reports")
    t0 = time.perf_counter()
    _, ratner_b = _cli_run(runs["root"], "ratner_b", "ratner-scan", RATNER_CONFIG)
    _, rigidity_b = _cli_run(runs["root"], "rigidity_b", "rigidity-scan", RIGIDITY_CONFIG, fmt="csv")
    same = (_strip_stamp(runs["ratner"] / "ratner.json") == _strip_stamp(ratner_b / "ratner.json")
            and _strip_stamp(runs["rigidity"] / "rigidity.json") == _strip_stamp(rigidity_b / "rigidity.json")
            and (runs["rigidity"] / "rigidity.csv").read_bytes() == (rigidity_b / "rigidity.csv").read_bytes())
    dt = time.perf_counter() - t0
    assert record(10, same, "re-run reports identical apart from timestamps", dt)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
