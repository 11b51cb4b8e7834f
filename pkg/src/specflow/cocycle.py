"""Birkhoff sums of a roof along a rotation orbit.

``f^(n)(x)`` is ``sum_{0<=j<n} f(x + j alpha)`` for ``n > 0``, zero for
``n = 0`` and ``-sum_{1<=j<=|n|} f(x - j alpha)`` for ``n < 0``.

Two evaluators are provided. :func:`birkhoff_naive` sums the orbit
directly with compensated summation and is the reference. :func:`birkhoff_fast`
evaluates the piecewise linear part exactly through orbit floor sums
against a convergent ``p/q`` with ``q >= 2|n|``, the trigonometric
segments in closed form, and only the polynomial segments by direct
summation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .arithmetic import (Rotation, count_orbit_in_arc, orbit_floor_sum, surrogate_index,
                         wrap)
from .errors import DegeneratePairError, WindowExceededError
from .roof import RoofFunction

_CHUNK = 1 << 18
_TIE_WIDTH = 1e-12


@dataclass(frozen=True)
class BirkhoffQuery:
    rot: Rotation
    f: RoofFunction
    n: int
    x: float

    def naive(self) -> float:
        return birkhoff_naive(self.rot, self.f, self.n, self.x)

    def fast(self) -> float:
        return birkhoff_fast(self.rot, self.f, self.n, self.x)


def orbit(rot: Rotation, x: float, start: int, stop: int) -> np.ndarray:
    """``{x + j alpha}`` for ``start <= j < stop``."""
    steps = rot.frac_multiples(np.arange(start, stop, dtype=np.int64))
    if not 0.0 <= x < 1.0:
        return wrap(x + steps)
    # x + {j alpha} lies in [0, 2) and subtracting 1 there is exact
    steps += x
    steps[steps >= 1.0] -= 1.0
    return steps


def birkhoff_naive(rot: Rotation, f: RoofFunction, n: int, x: float) -> float:
    """Direct orbit summation (``math.fsum`` per chunk and across chunks)."""
    n = int(n)
    if n == 0:
        return 0.0
    # backward case: x + j alpha for j = -|n| .. -1
    lo, hi, sign = (0, n, 1.0) if n > 0 else (n, 0, -1.0)
    parts = []
    for a in range(lo, hi, _CHUNK):
        b = min(a + _CHUNK, hi)
        parts.append(math.fsum(np.atleast_1d(f(orbit(rot, x, a, b))).tolist()))
    return sign * math.fsum(parts)


# ---------------------------------------------------------------------------
# exact piecewise linear part
# ---------------------------------------------------------------------------

def _exact_half(rot: Rotation, k: int, count2: int) -> tuple[Fraction, float]:
    """``alpha * count2 / 2`` as exact rational part plus a tiny float."""
    p, q = rot.p[k], rot.q[k]
    return Fraction(p * count2, 2 * q), rot.convergent_errors[k] * (count2 / 2)


def frac_sum_forward(rot: Rotation, u: Fraction, n: int) -> float:
    """``sum_{0<=j<n} {u + j alpha}`` for rational ``u`` in [0, 1)."""
    if n <= 0:
        return 0.0
    k = surrogate_index(rot, n)
    exact, tiny = _exact_half(rot, k, n * (n - 1))
    exact += n * u - orbit_floor_sum(rot, u, n)
    return float(exact) + tiny


def frac_sum_backward(rot: Rotation, u: Fraction, m: int) -> float:
    """``sum_{1<=j<=m} {u - j alpha}`` for rational ``u`` in [0, 1)."""
    if m <= 0:
        return 0.0
    k = surrogate_index(rot, m + 1)
    exact, tiny = _exact_half(rot, k, m * (m + 1))
    # floor(u - j alpha) = -floor(j alpha - u) - 1 since j alpha - u is never an integer
    exact = m * u - exact + m + orbit_floor_sum(rot, -u, m + 1) - math.floor(-u)
    return float(exact) - tiny


def birkhoff_pl_exact(rot: Rotation, f: RoofFunction, n: int, x: float) -> float:
    """Birkhoff sum of the piecewise linear part ``sum d_i {x - beta_i} + c``."""
    n = int(n)
    if n == 0:
        return 0.0
    fx = Fraction(x)
    total = []
    for b, d in zip(f.breakpoints, f.jumps):
        u = (fx - Fraction(b)) % 1
        if n > 0:
            total.append(d * frac_sum_forward(rot, u, n))
        else:
            total.append(-d * frac_sum_backward(rot, u, -n))
    total.append(f.constant * n)
    return math.fsum(total)


# ---------------------------------------------------------------------------
# AC segments
# ---------------------------------------------------------------------------

def _trig_sum(rot: Rotation, A: float, m: int, phase: float, x: float, n: int) -> float:
    """``sum_{0<=j<n} A sin(2 pi m (x + j alpha) + phase)`` in closed form."""
    if n <= 0:
        return 0.0
    theta = 2 * np.pi * rot.frac_multiple(m)
    theta_n = 2 * np.pi * rot.frac_multiple(m * n)
    num = complex(math.cos(theta_n) - 1.0, math.sin(theta_n))
    # e^{i theta} - 1 = 2i sin(theta/2) e^{i theta/2}
    half = theta / 2
    den = 2j * math.sin(half) * complex(math.cos(half), math.sin(half))
    psi = 2 * np.pi * m * x + phase
    geo = num / den
    return A * (complex(math.cos(psi), math.sin(psi)) * geo).imag


def _segment_sum(rot: Rotation, seg, x: float, n: int) -> float:
    if n == 0:
        return 0.0
    if seg.kind == "trig":
        A = float(seg.params["amplitude"])
        m = int(seg.params["frequency"])
        ph = float(seg.params.get("phase", 0.0))
        if n > 0:
            return _trig_sum(rot, A, m, ph, x, n)
        start = wrap(x + rot.frac_multiple(n))
        return -_trig_sum(rot, A, m, ph, start, -n)
    lo, hi, sign = (0, n, 1.0) if n > 0 else (n, 0, -1.0)
    parts = []
    for a in range(lo, hi, _CHUNK):
        b = min(a + _CHUNK, hi)
        parts.append(math.fsum(np.atleast_1d(seg(orbit(rot, x, a, b))).tolist()))
    return sign * math.fsum(parts)


def birkhoff_fast(rot: Rotation, f: RoofFunction, n: int, x: float) -> float:
    """Fast Birkhoff sum; requires ``q_K >= 2|n|`` (else ``WindowExceededError``)."""
    n = int(n)
    if n == 0:
        return 0.0
    if 2 * abs(n) > rot.q[-1]:
        raise WindowExceededError(f"|n| = {abs(n)} exceeds q_K/2 = {rot.q[-1] / 2}")
    parts = [birkhoff_pl_exact(rot, f, n, x)]
    parts.extend(_segment_sum(rot, seg, x, n) for seg in f.ac_segments)
    return math.fsum(parts)


def orbit_near_breakpoint(rot: Rotation, f: RoofFunction, n: int, x: float,
                          eta: float = _TIE_WIDTH) -> bool:
    """Does some orbit point of the ``n``-term sum lie within ``eta`` of a breakpoint?

    Exact count, one pair of floor sums per breakpoint. The backward range
    ``x - k alpha`` (``1 <= k <= |n|``) is handled as ``beta - x + k alpha``.
    """
    n = int(n)
    if n == 0 or not f.breakpoints:
        return False
    fx, w = Fraction(x), Fraction(eta)
    count = abs(n) + (0 if n > 0 else 1)
    for b in f.breakpoints:
        z = (fx - Fraction(b) + w) % 1 if n > 0 else (Fraction(b) - fx + w) % 1
        if count_orbit_in_arc(rot, z, count, Fraction(0), 2 * w) > 0:
            return True
    return False


def birkhoff(rot: Rotation, f: RoofFunction, n: int, x: float) -> float:
    """Fast path when inside the window, naive otherwise.

    The exact path treats ``x`` as a rational, while orbit points elsewhere
    are float sums ``x + {j alpha}``. When an orbit point sits within
    float noise of a jump the two can land on opposite sides, so such
    queries go to the naive evaluator to keep every caller on the float
    convention.
    """
    if 2 * abs(int(n)) > rot.q[-1] or orbit_near_breakpoint(rot, f, n, x):
        return birkhoff_naive(rot, f, n, x)
    return birkhoff_fast(rot, f, n, x)


def birkhoff_partial_sums(rot: Rotation, f: RoofFunction, x: float, n: int) -> np.ndarray:
    """``[f^(0)(x), ..., f^(n)(x)]`` by cumulative summation."""
    vals = np.atleast_1d(f(orbit(rot, x, 0, n)))
    out = np.empty(n + 1)
    out[0] = 0.0
    np.cumsum(vals, out=out[1:])
    return out


# ---------------------------------------------------------------------------
# jump counting
# ---------------------------------------------------------------------------

def _arc_length(x: float, y: float) -> Fraction:
    ell = (Fraction(y) - Fraction(x)) % 1
    if ell == 0:
        raise DegeneratePairError("x and y coincide on the circle")
    return ell


def jump_count_brute(rot: Rotation, f: RoofFunction, n: int, x: float, y: float) -> float:
    """``sum d_i`` over ``(i, 0 <= j < n)`` with ``{beta_i - j alpha}`` in the arc (x, y]."""
    ell = float(_arc_length(x, y))
    if n <= 0:
        return 0.0
    back = rot.frac_multiples(-np.arange(n, dtype=np.int64))
    total = []
    for b, d in zip(f.breakpoints, f.jumps):
        w = wrap(wrap(b + back) - x)
        hits = int(np.count_nonzero((w > 0.0) & (w <= ell)))
        total.append(d * hits)
    return math.fsum(total)


def jump_count(rot: Rotation, f: RoofFunction, n: int, x: float, y: float) -> float:
    """Same as :func:`jump_count_brute` via exact orbit counting.

    ``{beta - j alpha}`` lies in ``(x, x + l]`` exactly when
    ``{x - beta + j alpha}`` lies in ``[1 - l, 1)``.
    """
    ell = _arc_length(x, y)
    n = int(n)
    if n <= 0:
        return 0.0
    if 2 * n > rot.q[-1]:
        return jump_count_brute(rot, f, n, x, y)
    fx = Fraction(x)
    total = []
    for b, d in zip(f.breakpoints, f.jumps):
        u = (fx - Fraction(b)) % 1
        total.append(d * count_orbit_in_arc(rot, u, n, 1 - ell, Fraction(1)))
    return math.fsum(total)


def pl_difference(rot: Rotation, f: RoofFunction, n: int, x: float, y: float) -> float:
    """``n S l - dbar_n(x, y)`` with ``l`` the forward arc length from x to y."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    ell = _arc_length(x, y)
    return math.fsum([n * f.S * float(ell), -jump_count(rot, f, n, x, y)])


# ---------------------------------------------------------------------------
# uniform smallness of the AC part
# ---------------------------------------------------------------------------

def ac_uniform_smallness(rot: Rotation, f_ac: RoofFunction, s: int, n_x: int = 64,
                         n_h: int = 16) -> float:
    """Sampled ``sup |g^(n)(y) - g^(n)(x)|`` over ``n <= q_{s+1}``, ``|y - x| < 1/q_s``.

    ``x`` runs over an equispaced grid and ``y - x`` over ``n_h`` offsets of
    each sign up to ``(1 - 1e-9)/q_s``.
    """
    if s + 1 > rot.depth:
        raise WindowExceededError(f"need depth >= {s + 1}")
    if not f_ac.ac_segments and f_ac.constant == 0.0:
        return 0.0
    q_s, q_next = rot.q[s], rot.q[s + 1]
    hs = np.linspace(1.0, 0.0, n_h, endpoint=False) * (1 - 1e-9) / q_s
    hs = np.concatenate([hs, -hs])
    xs = (np.arange(n_x) + 0.5) / n_x
    steps = rot.frac_multiples(np.arange(q_next, dtype=np.int64))
    best = 0.0
    for x in xs:
        base = np.cumsum(np.atleast_1d(f_ac(wrap(x + steps))))
        pts = wrap(x + hs[:, None] + steps[None, :])
        other = np.cumsum(f_ac(pts), axis=1)
        best = max(best, float(np.max(np.abs(other - base[None, :]))))
    return best


def max_overlap(rot: Rotation, x: float, h: float, n: int) -> int:
    """Largest number of arcs ``[x + j alpha, x + j alpha + h]`` (j < n) sharing a point."""
    starts = orbit(rot, x, 0, n)
    ends = starts + h
    events = np.concatenate([
        np.stack([starts, np.ones(n)], axis=1),
        np.stack([ends, -np.ones(n)], axis=1),
        np.stack([starts + 1.0, np.ones(n)], axis=1),
        np.stack([ends + 1.0, -np.ones(n)], axis=1),
    ])
    order = np.lexsort((-events[:, 1], events[:, 0]))
    depth = np.cumsum(events[order, 1])
    return int(depth.max())
