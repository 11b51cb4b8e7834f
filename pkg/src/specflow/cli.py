"""Command-line front end.

Every subcommand takes an optional JSON config (``--config``); command-line
flags override it. Reports are written to ``--out`` (a directory) or, when
no directory is given, the JSON report goes to stdout.

Exit codes: 0 success, 2 configuration error, 3 domain error, 4 selftest
failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import io
from .arithmetic import Rotation, bounded_type_constant, cf_expand, check_denominator_bounds
from .cocycle import (birkhoff_fast, birkhoff_naive, jump_count, jump_count_brute, pl_difference)
from .errors import ConfigError, RoofSpecError, SpecflowError
from .flow import FlowPoint, SpecialFlow, advance, metric
from .poincare import (energy_rate, density_flux_divergence, first_return_closed,
                       first_return_numeric, hamiltonian, safe_thetas, separatrix_return_time,
                       separatrix_time_quadrature)
from .ratner import build_config, ratner_scan
from .rigidity import rigidity_scan
from .roof import load_roof

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_SELFTEST = 0, 2, 3, 4

DEFAULTS: dict[str, Any] = {
    "alpha": "golden",
    "depth": 40,
    "roof": "canonical",
    "seed": 0,
}


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    base = Path(path).parent
    roof = cfg.get("roof")
    if isinstance(roof, str) and roof.endswith(".json") and not Path(roof).is_absolute():
        cfg["roof"] = str(base / roof)
    return cfg


def _get(cfg: dict, key: str, kind: Callable, default=None):
    if key not in cfg or cfg[key] is None:
        if default is None and key not in DEFAULTS:
            raise ConfigError(f"missing required setting {key!r}")
        return default if default is not None else DEFAULTS[key]
    try:
        return kind(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {cfg[key]!r}") from exc


def _rotation(cfg: dict) -> Rotation:
    alpha = cfg.get("alpha", DEFAULTS["alpha"])
    depth = _get(cfg, "depth", int)
    if isinstance(alpha, (int, float)) and not isinstance(alpha, bool):
        alpha = float(alpha)
    elif not isinstance(alpha, str):
        raise ConfigError("alpha must be a number, a name or an expression string")
    try:
        return cf_expand(alpha, depth)
    except (SyntaxError, ValueError, TypeError) as exc:
        if isinstance(exc, SpecflowError):
            raise
        raise ConfigError(f"bad alpha {alpha!r}: {exc}") from exc


def _roof(cfg: dict):
    return load_roof(cfg.get("roof", DEFAULTS["roof"]))


def _times(spec) -> np.ndarray:
    if isinstance(spec, dict):
        try:
            start, stop = float(spec["start"]), float(spec["stop"])
            step = float(spec.get("step", 1.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("times range needs start, stop and optional step") from exc
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(max(count, 0))
    if isinstance(spec, (list, tuple)):
        return np.asarray([float(v) for v in spec])
    raise ConfigError("times must be a list or a {start, stop, step} object")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _stamp(report: dict) -> dict:
    report["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return report


def _emit(args, name: str, report: dict, table: tuple[list[str], list] | None = None) -> None:
    report = _stamp(dict(report))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if table is not None and args.format == "csv":
            io.write_csv(out / f"{name}.csv", table[0], table[1])
        elif table is not None:
            report["rows"] = [dict(zip(table[0], row)) for row in table[1]]
        io.write_json(out / f"{name}.json", report)
    else:
        if table is not None:
            report["rows"] = [dict(zip(table[0], row)) for row in table[1]]
        sys.stdout.write(io.dumps(report))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_cf(args, cfg) -> int:
    rot = _rotation(cfg)
    checks = check_denominator_bounds(rot)
    report = {
        "rotation": rot.to_json(),
        "alpha": rot.alpha,
        "p": list(rot.p),
        "q": list(rot.q),
        "C": bounded_type_constant(rot),
        "C_depth_surrogate": True,
        "terminated": rot.terminated,
        "denominator_bounds_hold": all(c["lower"] and c["upper"] and c["norm_bounds"] for c in checks),
    }
    _emit(args, "cf", report)
    return EXIT_OK


def cmd_birkhoff(args, cfg) -> int:
    rot, f = _rotation(cfg), _roof(cfg)
    ns = cfg.get("n", 1)
    xs = cfg.get("x", 0.0)
    ns = ns if isinstance(ns, list) else [ns]
    xs = xs if isinstance(xs, list) else [xs]
    rows = []
    for n in ns:
        for x in xs:
            n_i, x_f = int(n), float(x)
            naive = birkhoff_naive(rot, f, n_i, x_f)
            try:
                fast = birkhoff_fast(rot, f, n_i, x_f)
            except SpecflowError:
                fast = float("nan")
            rows.append([n_i, x_f, naive, fast])
    _emit(args, "birkhoff", {"command": "birkhoff", "alpha": rot.source, "depth": rot.depth,
                             "roof": f.to_json()}, (["n", "x", "naive", "fast"], rows))
    return EXIT_OK


def cmd_trow(args, cfg) -> int:
    rot, f = _rotation(cfg), _roof(cfg)
    queries = _get(cfg, "queries", int, 1000)
    n_max = _get(cfg, "n_max", int, 10_000)
    rng = np.random.default_rng(args.seed)
    f_pl, _ = f.decompose()
    worst = 0.0
    rows = []
    for _ in range(queries):
        n = int(rng.integers(0, n_max + 1))
        x, y = float(rng.random()), float(rng.random())
        if x == y:
            continue
        lhs = pl_difference(rot, f_pl, n, x, y)
        rhs = birkhoff_naive(rot, f_pl, n, y) - birkhoff_naive(rot, f_pl, n, x)
        worst = max(worst, abs(lhs - rhs))
        rows.append([n, x, y, lhs])
    report = {"command": "trow-check", "queries": queries, "n_max": n_max, "seed": args.seed,
              "max_abs_error": worst, "tolerance": 1e-9, "pass": worst < 1e-9}
    _emit(args, "trow", report, (["n", "x", "y", "value"], rows))
    return EXIT_OK


def cmd_ratner(args, cfg) -> int:
    rot, f = _rotation(cfg), _roof(cfg)
    rc = build_config(rot, f, _get(cfg, "epsilon", float, 0.1), _get(cfg, "N", int, 10),
                      _get(cfg, "gamma", float, 1.0), lift=cfg.get("lift", "direct"))
    pairs = _get(cfg, "pairs", int, 1000)
    if pairs < 1:
        raise ConfigError("pairs must be >= 1")
    report = ratner_scan(rc, pairs, args.seed, threads=args.threads,
                         keep_rows=bool(cfg.get("keep_rows", False)))
    report["command"] = "ratner-scan"
    _emit(args, "ratner", report)
    return EXIT_OK


def cmd_rigidity(args, cfg) -> int:
    rot, f = _rotation(cfg), _roof(cfg)
    times = _times(cfg.get("times", {"start": 10, "stop": 1000, "step": 1}))
    prof = rigidity_scan(rot, f, times, _get(cfg, "epsilon", float, 1e-3),
                         _get(cfg, "grid_size", int, 10_000), bool(cfg.get("include_zero", False)))
    summary = prof.summary(_get(cfg, "threshold", float, 0.15))
    summary.update({"command": "rigidity-scan", "alpha": rot.source, "depth": rot.depth})
    _emit(args, "rigidity", summary,
          (["t", "epsilon", "mu_hat", "window_lo", "window_hi"], [list(r) for r in prof.rows()]))
    return EXIT_OK


def cmd_flow_orbit(args, cfg) -> int:
    rot, f = _rotation(cfg), _roof(cfg)
    x = _get(cfg, "x", float, 0.0)
    s = _get(cfg, "s", float, 0.0)
    p = FlowPoint(x, s)
    if not p.is_valid(f):
        raise ConfigError("start point is not under the roof")
    times = _times(cfg.get("times", {"start": 0, "stop": 10, "step": 0.5}))
    flow = SpecialFlow(rot, f)
    rows = [[t, q.x, q.s] for t, q in flow.orbit(p, times)]
    _emit(args, "flow_orbit", {"command": "flow-orbit", "start": [x, s]}, (["t", "x", "s"], rows))
    return EXIT_OK


def cmd_section(args, cfg) -> int:
    system = cfg.get("system", "normalized")
    r = _get(cfg, "r", float, 0.1)
    tol = _get(cfg, "tol", float, 1e-10)
    thetas = cfg.get("thetas")
    thetas = np.asarray(thetas, dtype=float) if thetas is not None else safe_thetas(_get(cfg, "count", int, 100))
    rows = []
    for th in thetas:
        ev = first_return_numeric(system, r, float(th), tol)
        closed = first_return_closed(r, float(th)) if system == "normalized" else float("nan")
        rows.append([r, float(th), ev.return_time, closed, abs(ev.return_time - closed)])
    errs = [row[4] for row in rows if not math.isnan(row[4])]
    report = {"command": "section-return", "system": system, "r": r, "tol": tol,
              "max_abs_err": max(errs) if errs else None}
    if cfg.get("separatrix", False):
        report["separatrix"] = separatrix_return_time()
        report["separatrix_quadrature"] = separatrix_time_quadrature()
    _emit(args, "section_return", report,
          (["r", "theta", "tau_numeric", "tau_closed", "abs_err"], rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

SELFTEST_TOLERANCES = {
    "cf_golden": 0.0,
    "denominator_bounds": 0.0,
    "cocycle_identity": 1e-9,
    "trow_identity": 1e-9,
    "fast_naive": 1e-9,
    "jump_count": 0.0,
    "flow_group_law": 1e-9,
    "energy_rate": 1e-12,
    "density_divergence": 1e-10,
    "return_time": 1e-4,
    "ratner_constants": 1e-12,
}


def _selftest_checks(seed: int) -> dict[str, Callable[[], float]]:
    """Each check returns an error to be compared with its tolerance (``<=``)."""
    rng = np.random.default_rng(seed)
    golden = cf_expand("golden", 40)
    silver = cf_expand("sqrt2m1", 40)
    canon = load_roof("canonical")
    wavy = load_roof("canonical_sin")

    def cf_golden():
        q = cf_expand("golden", 8).q
        return float(q != (1, 1, 2, 3, 5, 8, 13, 21, 34))

    def denominator_bounds():
        bad = 0
        for rot in (cf_expand("golden", 36), cf_expand("sqrt2m1", 36)):
            bad += sum(not (c["lower"] and c["upper"] and c["norm_bounds"])
                       for c in check_denominator_bounds(rot))
        return float(bad)

    def cocycle_identity():
        worst = 0.0
        for rot in (golden, silver):
            for _ in range(100):
                m, n = (int(v) for v in rng.integers(-1000, 1001, 2))
                x = float(rng.random())
                lhs = birkhoff_naive(rot, canon, m + n, x)
                rhs = birkhoff_naive(rot, canon, m, x) + birkhoff_naive(rot, canon, n, rot.rotate(x, m))
                worst = max(worst, abs(lhs - rhs))
        return worst

    def trow_identity():
        worst = abs(pl_difference(golden, canon, 3, 0.3, 0.4) + 0.7)
        for _ in range(100):
            n = int(rng.integers(0, 2001))
            x, y = float(rng.random()), float(rng.random())
            lhs = pl_difference(golden, canon, n, x, y)
            rhs = birkhoff_naive(golden, canon, n, y) - birkhoff_naive(golden, canon, n, x)
            worst = max(worst, abs(lhs - rhs))
        return worst

    def fast_naive():
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(-10_000, 10_001))
            x = float(rng.random())
            a, b = birkhoff_naive(golden, wavy, n, x), birkhoff_fast(golden, wavy, n, x)
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
        return worst

    def jump_count_check():
        bad = 0
        for _ in range(20):
            n = int(rng.integers(0, 2000))
            x, y = float(rng.random()), float(rng.random())
            bad += jump_count(golden, canon, n, x, y) != jump_count_brute(golden, canon, n, x, y)
        return float(bad)

    def flow_group_law():
        worst = 0.0
        for _ in range(30):
            x = float(rng.random())
            p = FlowPoint(x, float(rng.random()) * wavy(x))
            t, u = (float(v) for v in rng.uniform(-100, 100, 2))
            a = advance(advance(p, t, golden, wavy), u, golden, wavy)
            b = advance(p, t + u, golden, wavy)
            worst = max(worst, metric(a, b))
        return worst

    def energy():
        x, y = rng.uniform(-1, 2, 1000), rng.uniform(-1.5, 1.5, 1000)
        keep = np.hypot(x, y) > 0.1
        scale = np.abs(hamiltonian(x[keep], y[keep])) + 1.0
        return float(np.max(np.abs(energy_rate(x[keep], y[keep])) / scale))

    def divergence():
        x, y = rng.uniform(-1, 2, 1000), rng.uniform(-1.5, 1.5, 1000)
        keep = np.hypot(x, y) > 0.1
        return float(np.max(np.abs(density_flux_divergence(x[keep], y[keep]))))

    def return_time():
        worst = 0.0
        for th in safe_thetas(10):
            ev = first_return_numeric("normalized", 0.1, float(th), 1e-10)
            worst = max(worst, abs(ev.return_time - first_return_closed(0.1, float(th))))
        return worst

    def ratner_constants():
        rc = build_config(golden, canon, 0.1, 10, 1.0)
        return max(abs(rc.kappa - 0.01), abs(rc.delta - 0.5 / 2584), abs(rc.p - 0.5))

    return {
        "cf_golden": cf_golden,
        "denominator_bounds": denominator_bounds,
        "cocycle_identity": cocycle_identity,
        "trow_identity": trow_identity,
        "fast_naive": fast_naive,
        "jump_count": jump_count_check,
        "flow_group_law": flow_group_law,
        "energy_rate": energy,
        "density_divergence": divergence,
        "return_time": return_time,
        "ratner_constants": ratner_constants,
    }


def run_selftest(seed: int = 0, overrides: dict[str, float] | None = None,
                 stream=None) -> dict:
    tols = dict(SELFTEST_TOLERANCES)
    for key, val in (overrides or {}).items():
        if key not in tols:
            raise ConfigError(f"unknown selftest check {key!r}")
        tols[key] = float(val)
    results = []
    for name, fn in _selftest_checks(seed).items():
        t0 = time.perf_counter()
        err = fn()
        ok = err <= tols[name] and np.isfinite(err)
        results.append({"check": name, "error": float(err), "tolerance": tols[name], "pass": bool(ok),
                        "seconds": round(time.perf_counter() - t0, 3)})
        if stream is not None:
            stream.write(f"{'PASS' if ok else 'FAIL'} {name}: error={err:.3e} tol={tols[name]:.1e}\n")
    return {"checks": results, "pass": all(r["pass"] for r in results)}


def cmd_selftest(args, cfg) -> int:
    overrides = dict(cfg.get("tolerances", {}))
    for item in args.set or []:
        key, _, val = item.partition("=")
        try:
            overrides[key] = float(val)
        except ValueError as exc:
            raise ConfigError(f"bad --set value {item!r}") from exc
    report = run_selftest(args.seed, overrides, stream=sys.stderr)
    report["command"] = "selftest"
    for r in report["checks"]:
        r.pop("seconds")
    _emit(args, "selftest", report)
    return EXIT_OK if report["pass"] else EXIT_SELFTEST


COMMANDS = {
    "cf": (cmd_cf, "continued fraction data of alpha"),
    "birkhoff": (cmd_birkhoff, "Birkhoff sums, naive and fast"),
    "trow-check": (cmd_trow, "check the jump-count identity for the linear part"),
    "ratner-scan": (cmd_ratner, "witness statistics over random close pairs"),
    "rigidity-scan": (cmd_rigidity, "near-return measure profile"),
    "flow-orbit": (cmd_flow_orbit, "special-flow orbit samples"),
    "section-return": (cmd_section, "first-return times to a circle around the singularity"),
    "selftest": (cmd_selftest, "fast built-in checks"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="random seed (overrides config)")
        sp.add_argument("--out", help="output directory (default: JSON to stdout)")
        sp.add_argument("--format", choices=("json", "csv"), default="json",
                        help="format for tabular output")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: available cores)")
        sp.add_argument("--alpha", help="rotation number: name, expression or decimal")
        sp.add_argument("--depth", type=int, help="continued fraction depth")
        sp.add_argument("--roof", help="roof name or JSON file")
        if name == "selftest":
            sp.add_argument("--set", action="append", metavar="CHECK=TOL",
                            help="override a check tolerance")
    return parser


def _error_record(exc: Exception, code: int) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code},
                      sort_keys=True)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        for key in ("alpha", "depth", "roof"):
            if getattr(args, key) is not None:
                cfg[key] = getattr(args, key)
        if args.seed is None:
            args.seed = int(cfg.get("seed", DEFAULTS["seed"]))
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.threads is None:
            args.threads = int(cfg.get("threads", os.cpu_count() or 1))
        if args.threads < 1:
            raise ConfigError("threads must be >= 1")
        return COMMANDS[args.command][0](args, cfg)
    except (ConfigError, RoofSpecError) as exc:
        sys.stderr.write(_error_record(exc, EXIT_CONFIG) + "\n")
        return EXIT_CONFIG
    except SpecflowError as exc:
        sys.stderr.write(_error_record(exc, EXIT_DOMAIN) + "\n")
        return EXIT_DOMAIN
    except OSError as exc:
        sys.stderr.write(_error_record(exc, EXIT_CONFIG) + "\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
