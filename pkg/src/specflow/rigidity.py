"""Near-return sets ``B_t = {x : |f^(j)(x) - t| < eps for some j}``.

A partially rigid special flow must have ``mu(B_t)`` bounded below along
some ``t -> inf``. For roofs with nonzero jump sum the measure stays of
order ``eps``; a constant roof is the positive control (``B_t`` is
everything at integer ``t``).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arithmetic import Rotation, wrap
from .cocycle import birkhoff_partial_sums
from .flow import advance_many
from .roof import RoofFunction

_ROW_CHUNK = 512


def _window(t: float, eps: float, c_f: float, C_f: float) -> tuple[float, float]:
    return (t - eps) / C_f, (t + eps) / c_f


def near_return_indices(rot: Rotation, f: RoofFunction, x: float, t: float, epsilon: float,
                        include_zero: bool = False) -> list[int]:
    """All ``j`` with ``|f^(j)(x) - t| < eps``; they lie in ``((t-eps)/C_f, (t+eps)/c_f)``."""
    c_f, C_f, _ = f.bounds()
    if not 0 < epsilon < c_f:
        raise ValueError("need 0 < epsilon < c_f")
    lo, hi = _window(t, epsilon, c_f, C_f)
    j_max = max(0, math.floor(hi))
    sums = birkhoff_partial_sums(rot, f, x, j_max)
    js = np.flatnonzero(np.abs(sums - t) < epsilon)
    first = 0 if include_zero else 1
    return [int(j) for j in js if j >= first and lo < j < hi]


@dataclass
class RigidityProfile:
    times: np.ndarray
    epsilon: float
    mu_hat: np.ndarray
    window_lo: np.ndarray
    window_hi: np.ndarray
    grid_size: int
    include_zero: bool = False
    meta: dict = field(default_factory=dict)

    def summary(self, u: float = 0.15) -> dict:
        if self.mu_hat.size == 0:
            return {"count": 0, "sup_mu_hat": None, "argmax_t": None, "threshold_u": u,
                    "rigidity_flag": False, "epsilon": self.epsilon, "grid_size": self.grid_size}
        i = int(np.argmax(self.mu_hat))
        sup = float(self.mu_hat[i])
        return {
            "count": int(self.mu_hat.size),
            "sup_mu_hat": sup,
            "argmax_t": float(self.times[i]),
            "mean_mu_hat": float(self.mu_hat.mean()),
            "threshold_u": float(u),
            "rigidity_flag": bool(sup >= u),
            "epsilon": self.epsilon,
            "grid_size": self.grid_size,
            "include_zero": self.include_zero,
            **self.meta,
        }

    def rows(self):
        for t, m, lo, hi in zip(self.times, self.mu_hat, self.window_lo, self.window_hi):
            yield float(t), self.epsilon, float(m), float(lo), float(hi)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "epsilon", "mu_hat", "window_lo", "window_hi"])
            for row in self.rows():
                w.writerow([repr(v) for v in row])


def rigidity_scan(rot: Rotation, f: RoofFunction, times, epsilon: float, grid_size: int,
                  include_zero: bool = False) -> RigidityProfile:
    """``mu_hat(B_t)`` on the grid ``x_i = i/grid_size`` for every requested ``t``.

    Partial sums up to the largest window end are built once per block of
    grid rows; each row is increasing, so membership is one
    ``searchsorted`` per row over all times.
    """
    times = np.asarray(list(times), dtype=float)
    c_f, C_f, _ = f.bounds()
    if not 0 < epsilon < c_f:
        raise ValueError("need 0 < epsilon < c_f")
    if grid_size < 1000:
        raise ValueError("grid_size must be >= 1000")
    lo, hi = _window(times, epsilon, c_f, C_f)
    if times.size == 0:
        empty = np.zeros(0)
        return RigidityProfile(times, epsilon, empty, empty, empty, grid_size, include_zero)
    if np.any(times <= 0):
        raise ValueError("times must be positive")
    j_max = int(math.floor(hi.max()))
    steps = rot.frac_multiples(np.arange(j_max, dtype=np.int64))
    grid = np.arange(grid_size) / grid_size
    counts = np.zeros(times.size, dtype=np.int64)
    lower_t = times - epsilon
    upper_t = times + epsilon
    for a in range(0, grid_size, _ROW_CHUNK):
        xs = grid[a:a + _ROW_CHUNK]
        vals = f(wrap(xs[:, None] + steps[None, :]))
        sums = np.cumsum(vals, axis=1)  # column j-1 holds f^(j)
        if include_zero:
            sums = np.concatenate([np.zeros((xs.size, 1)), sums], axis=1)
        for row in sums:
            idx = np.searchsorted(row, lower_t, side="right")
            ok = idx < row.size
            hit = np.zeros(times.size, dtype=bool)
            hit[ok] = row[idx[ok]] < upper_t[ok]
            counts += hit
    mu = counts / grid_size
    return RigidityProfile(times, float(epsilon), mu, lo, hi, int(grid_size), include_zero)


def measure_B(rot: Rotation, f: RoofFunction, t: float, epsilon: float, grid_size: int,
              include_zero: bool = False) -> float:
    """Grid estimate of ``mu(B_t)``."""
    return float(rigidity_scan(rot, f, [t], epsilon, grid_size, include_zero).mu_hat[0])


def strip_return_check(rot: Rotation, f: RoofFunction, t: float, epsilon: float, samples: int,
                       seed: int) -> dict:
    """Points of the strip ``X x [0, eps)`` that are back in the strip after time
    ``t`` must have base point in ``B_t``; counts violations."""
    rng = np.random.default_rng(seed)
    x = rng.random(samples)
    s = rng.random(samples) * epsilon
    xt, st = advance_many(x, s, t, rot, f)
    back = st < epsilon
    violations = 0
    for xi in x[back]:
        if not near_return_indices(rot, f, float(xi), t, epsilon, include_zero=True):
            violations += 1
    return {"t": t, "epsilon": epsilon, "samples": samples, "returned": int(back.sum()),
            "violations": violations}
