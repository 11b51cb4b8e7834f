"""The special flow under a roof over the rotation.

Points are ``(x, s)`` with ``0 <= s < f(x)``. Time ``t`` moves ``s`` up at
unit speed; on reaching the roof the point jumps to ``(T x, 0)``. So
``T_t(x, s) = (T^n x, s + t - f^(n)(x))`` with
``f^(n)(x) <= s + t < f^(n+1)(x)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .arithmetic import Rotation, dist_to_int, wrap
from .cocycle import birkhoff, birkhoff_naive
from .roof import RoofFunction

_MARGIN = 1e-7
_WALK_LIMIT = 64


@dataclass(frozen=True)
class FlowPoint:
    x: float
    s: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "s", float(self.s))

    def is_valid(self, f: RoofFunction) -> bool:
        return 0.0 <= self.s < f(self.x)


def metric(p: FlowPoint, q: FlowPoint) -> float:
    """``||x - y|| + |s - t|``."""
    return float(dist_to_int(p.x - q.x)) + abs(p.s - q.s)


def _normalise(rot: Rotation, f: RoofFunction, x: float, h: float) -> tuple[float, float]:
    """Step along the fibre chain until ``0 <= h < f(x)`` holds in floats."""
    while h >= f(x):
        h -= f(x)
        x = rot.rotate(x, 1)
    while h < 0.0:
        x = rot.rotate(x, -1)
        h += f(x)
    # h + f(x) may round up to exactly f(x) for tiny negative h
    if h >= f(x):
        h = 0.0
        x = rot.rotate(x, 1)
    return x, h


def advance(p: FlowPoint, t: float, rot: Rotation, f: RoofFunction) -> FlowPoint:
    """``T_t p`` for any real ``t``.

    The lap index is seeded at ``floor((s + t)/mean f)``, the Birkhoff sum
    there is evaluated (fast path inside the validity window), and the
    index is walked to the bracket. When the height lands within ``1e-7``
    of either end of the bracket the sum is recomputed with the naive
    evaluator before the result is fixed.
    """
    u = p.s + t
    if 0.0 <= u < f(p.x):
        return FlowPoint(p.x, u)
    if abs(u) < _WALK_LIMIT * f.bounds()[0]:
        x, h = _normalise(rot, f, p.x, u)
        return FlowPoint(x, h)
    n = math.floor(u / f.mean())
    F = birkhoff(rot, f, n, p.x)
    n, F = _walk(rot, f, p.x, u, n, F)
    x_n = rot.rotate(p.x, n)
    if min(u - F, F + f(x_n) - u) < _MARGIN:
        F = birkhoff_naive(rot, f, n, p.x)
        n, F = _walk(rot, f, p.x, u, n, F)
        x_n = rot.rotate(p.x, n)
    x, h = _normalise(rot, f, x_n, u - F)
    return FlowPoint(x, h)


def _walk(rot, f, x, u, n, F):
    while F > u:
        n -= 1
        F -= f(rot.rotate(x, n))
    while True:
        nxt = F + f(rot.rotate(x, n))
        if nxt > u:
            return n, F
        n, F = n + 1, nxt


def advance_many(xs: np.ndarray, ss: np.ndarray, t: float, rot: Rotation,
                 f: RoofFunction) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``T_t`` for a batch of points (stepwise; meant for moderate |t|)."""
    x = np.array(xs, dtype=float, copy=True)
    h = np.asarray(ss, dtype=float) + t
    a = rot.alpha
    while True:
        fx = f(x)
        up = h >= fx
        if not up.any():
            break
        h[up] -= fx[up]
        x[up] = wrap(x[up] + a)
    while True:
        down = h < 0.0
        if not down.any():
            break
        x[down] = wrap(x[down] - a)
        h[down] += f(x[down])
    return x, h


class SpecialFlow:
    """Convenience wrapper binding a rotation and a roof."""

    def __init__(self, rot: Rotation, f: RoofFunction):
        self.rot = rot
        self.f = f
        self.c_f, self.C_f, self.V = f.bounds()

    def advance(self, p: FlowPoint, t: float) -> FlowPoint:
        return advance(p, t, self.rot, self.f)

    def orbit(self, p: FlowPoint, times: Iterable[float]) -> list[tuple[float, FlowPoint]]:
        return [(float(t), self.advance(p, float(t))) for t in times]


def orbit_samples(rot: Rotation, f: RoofFunction, x: float, s: float, times: np.ndarray,
                  n_max: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``T_t (x, s)`` for many nonnegative ``t`` from one cumulative sum.

    Returns ``(lap_index, x_t, s_t)``. Accurate while the partial sums stay
    well below ``1/eps`` (a few 1e6 laps is fine).
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("orbit_samples takes nonnegative times")
    top = s + float(times.max(initial=0.0))
    if n_max is None:
        n_max = int(top / f.bounds()[0]) + 2
    steps = np.arange(n_max + 1, dtype=np.int64)
    xs = wrap(x + rot.frac_multiples(steps))
    cums = np.concatenate(([0.0], np.cumsum(f(xs[:-1]))))
    u = s + times
    n = np.searchsorted(cums, u, side="right") - 1
    if np.any(n >= n_max):
        raise ValueError("n_max too small for requested times")
    h = u - cums[n]
    x_t = xs[n]
    # rounding of the cumulative sum can leave h a hair outside [0, f)
    over = h >= f(x_t)
    if over.any():
        h[over] -= f(x_t[over])
        n[over] += 1
        x_t[over] = xs[n[over]]
    h[h < 0.0] = 0.0
    return n, x_t, h


def write_orbit_csv(path: str | Path, rows: Iterable[tuple[float, FlowPoint]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "s"])
        for t, p in rows:
            w.writerow([repr(float(t)), repr(float(p.x)), repr(float(p.s))])


def volume_check(rot: Rotation, f: RoofFunction, t: float, samples: int, seed: int,
                 box: tuple[float, float, float, float] = (0.2, 0.5, 0.3, 0.9)) -> dict:
    """Monte Carlo comparison of ``m(B)`` and ``m(T_t^{-1} B)``.

    Points are drawn uniformly from ``[0, 1) x [0, C_f)`` and kept when under
    the roof; ``box = (x0, x1, s0, s1)``. The difference of the two indicator
    means is paired on the same sample so its standard error is small.
    """
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    c_f, C_f, _ = f.bounds()
    rng = np.random.default_rng(seed)
    x = rng.random(samples)
    s = rng.random(samples) * C_f
    under = s < f(x)
    x0, x1, s0, s1 = box

    def inside(xx, ss):
        return (xx >= x0) & (xx < x1) & (ss >= s0) & (ss < s1)

    before = inside(x, s) & under
    xt, st = advance_many(x[under], s[under], t, rot, f)
    after = np.zeros(samples, dtype=bool)
    after[under] = inside(xt, st)
    area = C_f
    diff = after.astype(float) - before.astype(float)
    return {
        "t": float(t),
        "samples": int(samples),
        "seed": int(seed),
        "box": list(box),
        "measure_box": float(before.mean() * area),
        "measure_preimage": float(after.mean() * area),
        "discrepancy": float(diff.mean() * area),
        "std_error": float(diff.std(ddof=1) * area / math.sqrt(samples)),
    }
