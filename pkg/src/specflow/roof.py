"""Piecewise absolutely continuous roof functions on the circle.

A roof is stored as

    f(x) = sum_i d_i {x - beta_i} + c + g(x)

where ``{.}`` is the fractional part, ``d_i = f(beta_i^-) - f(beta_i^+)``
and ``g`` is a sum of absolutely continuous segments (trigonometric modes
on the whole circle, or polynomials supported on a sub-arc and vanishing at
its ends). The linear part has slope ``S = sum_i d_i`` everywhere.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import PositivityError, RoofSpecError

_BOUND_GRID = 1 << 14


@dataclass(frozen=True)
class ACSegment:
    """One absolutely continuous summand of the roof.

    kind ``"trig"``: ``amplitude * sin(2*pi*frequency*x + phase)`` on the
    whole circle (``frequency`` a nonzero integer).

    kind ``"poly"``: ``sum_k coefficients[k] * x**k`` for ``x`` in
    ``domain = [a, b]`` and zero elsewhere. The polynomial must vanish at
    ``a`` and ``b``, except on the full domain ``[0, 1]`` where
    ``p(0) == p(1)`` is enough.
    """

    kind: str
    params: dict
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.kind == "trig":
            freq = self.params.get("frequency")
            if freq is None or int(freq) != freq or int(freq) == 0:
                raise RoofSpecError("trig segment needs a nonzero integer frequency")
            if tuple(self.domain) != (0.0, 1.0):
                raise RoofSpecError("trig segments live on the whole circle")
            if "amplitude" not in self.params:
                raise RoofSpecError("trig segment needs an amplitude")
        elif self.kind == "poly":
            a, b = self.domain
            if not (0.0 <= a < b <= 1.0):
                raise RoofSpecError(f"bad poly domain {self.domain}")
            coeffs = self.params.get("coefficients")
            if not coeffs:
                raise RoofSpecError("poly segment needs coefficients")
            scale = max(1.0, float(np.max(np.abs(coeffs))))
            if (a, b) == (0.0, 1.0):
                if abs(P.polyval(0.0, coeffs) - P.polyval(1.0, coeffs)) > 1e-12 * scale:
                    raise RoofSpecError("full-circle poly segment must satisfy p(0) == p(1)")
            elif max(abs(P.polyval(a, coeffs)), abs(P.polyval(b, coeffs))) > 1e-12 * scale:
                raise RoofSpecError("poly segment must vanish at both ends of its domain")
        else:
            raise RoofSpecError(f"unknown segment kind {self.kind!r}")

    @property
    def full_circle(self) -> bool:
        return tuple(self.domain) == (0.0, 1.0)

    @cached_property
    def _coeffs(self) -> np.ndarray:
        return np.asarray(self.params["coefficients"], dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "trig":
            A = float(self.params["amplitude"])
            m = int(self.params["frequency"])
            ph = float(self.params.get("phase", 0.0))
            return A * np.sin(2 * np.pi * m * x + ph)
        a, b = self.domain
        vals = P.polyval(x, self._coeffs)
        return np.where((x >= a) & (x < b), vals, 0.0)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "trig":
            A = float(self.params["amplitude"])
            m = int(self.params["frequency"])
            ph = float(self.params.get("phase", 0.0))
            return 2 * np.pi * m * A * np.cos(2 * np.pi * m * x + ph)
        a, b = self.domain
        vals = P.polyval(x, P.polyder(self._coeffs))
        return np.where((x >= a) & (x < b), vals, 0.0)

    def mean(self) -> float:
        if self.kind == "trig":
            return 0.0
        a, b = self.domain
        anti = P.polyint(self._coeffs)
        return float(P.polyval(b, anti) - P.polyval(a, anti))

    def _critical_points(self, coeffs) -> np.ndarray:
        a, b = self.domain
        roots = P.polyroots(coeffs) if len(coeffs) > 1 else np.array([])
        real = roots[np.abs(roots.imag) < 1e-12].real if roots.size else roots
        inner = real[(real > a) & (real < b)] if real.size else real
        return np.sort(np.concatenate(([a], inner, [b])))

    def variation(self) -> float:
        """Total variation over the segment's domain."""
        if self.kind == "trig":
            return 4.0 * abs(float(self.params["amplitude"])) * abs(int(self.params["frequency"]))
        pts = self._critical_points(P.polyder(self._coeffs))
        return float(np.sum(np.abs(np.diff(P.polyval(pts, self._coeffs)))))

    def lipschitz(self) -> float:
        if self.kind == "trig":
            return 2 * np.pi * abs(float(self.params["amplitude"])) * abs(int(self.params["frequency"]))
        d1 = P.polyder(self._coeffs)
        pts = self._critical_points(P.polyder(d1))
        return float(np.max(np.abs(P.polyval(pts, d1))))

    def to_json(self) -> dict:
        params = {k: (list(map(float, v)) if isinstance(v, (list, tuple, np.ndarray)) else v)
                  for k, v in self.params.items()}
        return {"kind": self.kind, "params": params, "domain": [float(self.domain[0]), float(self.domain[1])]}

    @classmethod
    def from_json(cls, data: dict) -> "ACSegment":
        try:
            dom = data.get("domain", (0.0, 1.0))
            return cls(data["kind"], dict(data["params"]), (float(dom[0]), float(dom[1])))
        except (KeyError, TypeError, IndexError) as exc:
            raise RoofSpecError(f"malformed ac segment {data!r}") from exc


@dataclass(frozen=True)
class RoofFunction:
    """Roof ``sum_i d_i {x - beta_i} + c + g`` with right-continuous values.

    Construction merges coincident breakpoints and drops zero jumps but
    does not require positivity; :meth:`bounds` certifies it. The zero-mean
    remainder returned by :meth:`decompose` is a ``RoofFunction`` too.
    """

    breakpoints: tuple[float, ...] = ()
    jumps: tuple[float, ...] = ()
    constant: float = 0.0
    ac_segments: tuple[ACSegment, ...] = field(default=())

    def __post_init__(self):
        if len(self.breakpoints) != len(self.jumps):
            raise RoofSpecError("breakpoints and jumps must have equal length")
        merged: dict[float, float] = {}
        for b, d in zip(self.breakpoints, self.jumps):
            b = float(b) % 1.0
            b = 0.0 if b >= 1.0 else b
            merged[b] = merged.get(b, 0.0) + float(d)
        keys = sorted(k for k, v in merged.items() if v != 0.0)
        object.__setattr__(self, "breakpoints", tuple(keys))
        object.__setattr__(self, "jumps", tuple(merged[k] for k in keys))
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "ac_segments", tuple(self.ac_segments))

    # -- evaluation ---------------------------------------------------------

    @cached_property
    def _beta(self) -> np.ndarray:
        return np.asarray(self.breakpoints, dtype=float)

    @cached_property
    def _d(self) -> np.ndarray:
        return np.asarray(self.jumps, dtype=float)

    @property
    def k(self) -> int:
        return len(self.breakpoints)

    def sum_of_jumps(self) -> float:
        return math.fsum(self.jumps)

    @property
    def S(self) -> float:
        return self.sum_of_jumps()

    def pl_part(self, x, left: bool = False):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.constant)
        t = np.empty(x.shape)
        # for x in [0, 1) the difference x - b lies in (-1, 1) and np.mod
        # amounts to adding 1 to the negative entries
        reduced = x.size > 0 and x.min() >= 0.0 and x.max() < 1.0
        for b, d in zip(self.breakpoints, self.jumps):
            np.subtract(x, b, out=t)
            if reduced:
                t[t < 0.0] += 1.0
            else:
                np.mod(t, 1.0, out=t)
            if left:
                t[t == 0.0] = 1.0
            else:
                t[t >= 1.0] = 0.0
            t *= d
            out += t
        return out

    def ac_part(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for seg in self.ac_segments:
            out += seg(x)
        return out

    def __call__(self, x):
        val = self.pl_part(x)
        if self.ac_segments:
            val += self.ac_part(x)
        return float(val) if np.ndim(val) == 0 else val

    eval = __call__

    def eval_left(self, x):
        """Left limit ``f(x^-)``."""
        val = self.pl_part(x, left=True) + self.ac_part(x)
        return float(val) if np.ndim(val) == 0 else val

    def derivative(self, x):
        """Derivative away from breakpoints."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.S)
        for seg in self.ac_segments:
            out = out + seg.derivative(x)
        return out

    # -- structure ----------------------------------------------------------

    def ac_mean(self) -> float:
        return math.fsum(seg.mean() for seg in self.ac_segments)

    def mean(self) -> float:
        """``int_0^1 f``."""
        return self.constant + 0.5 * math.fsum(self.jumps) + self.ac_mean()

    def decompose(self) -> tuple["RoofFunction", "RoofFunction"]:
        """Split into ``f_pl`` (slope S, same jumps) and a zero-mean AC remainder."""
        m = self.ac_mean()
        f_pl = RoofFunction(self.breakpoints, self.jumps, self.constant + m, ())
        f_ac = RoofFunction((), (), -m, self.ac_segments)
        return f_pl, f_ac

    @property
    def is_pl(self) -> bool:
        return not self.ac_segments

    # -- bounds -------------------------------------------------------------

    def _ac_lipschitz(self) -> float:
        return math.fsum(seg.lipschitz() for seg in self.ac_segments)

    def _ac_variation(self) -> float:
        return math.fsum(seg.variation() for seg in self.ac_segments)

    def _range(self) -> tuple[float, float]:
        # nodes: breakpoints, segment ends and (if needed) a uniform grid
        nodes = {0.0, 1.0, *self.breakpoints}
        for seg in self.ac_segments:
            nodes.update(seg.domain)
        if self.ac_segments:
            nodes.update(np.linspace(0.0, 1.0, _BOUND_GRID + 1).tolist())
        t = np.array(sorted(nodes))
        left_end, right_end = t[:-1], t[1:]
        u = self(left_end)                     # value just right of the left node
        v = self.eval_left(right_end)          # value just left of the right node
        v = np.where(right_end >= 1.0, self.eval_left(0.0), v)
        if not self.ac_segments:
            return float(min(u.min(), v.min())), float(max(u.max(), v.max()))
        L = abs(self.S) + self._ac_lipschitz()
        h = right_end - left_end
        lo = np.minimum(u, v) - np.maximum(0.0, L * h - np.abs(u - v)) / 2
        hi = np.maximum(u, v) + np.maximum(0.0, L * h - np.abs(u - v)) / 2
        return float(lo.min()), float(hi.max())

    @cached_property
    def _bounds(self) -> tuple[float, float, float]:
        lo, hi = self._range()
        var = abs(self.S) + math.fsum(abs(d) for b, d in zip(self.breakpoints, self.jumps) if b != 0.0)
        var += self._ac_variation()
        return lo, hi, var

    def bounds(self) -> tuple[float, float, float]:
        """``(c_f, C_f, V)``: certified ``0 < c_f <= f <= C_f`` and ``V >= Var f``.

        Exact when there are no AC segments. With AC segments the range is
        widened by a Lipschitz margin between grid nodes. ``V`` is the
        variation over ``[0, 1)``, so a jump sitting at 0 is not counted.
        """
        lo, hi, var = self._bounds
        if not lo > 0.0:
            raise PositivityError(f"roof is not bounded away from zero: certified inf bound {lo}")
        return lo, hi, var

    @property
    def c_f(self) -> float:
        return self.bounds()[0]

    @property
    def C_f(self) -> float:
        return self.bounds()[1]

    @property
    def V(self) -> float:
        return self.bounds()[2]

    # -- I/O ----------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "breakpoints": list(self.breakpoints),
            "jumps": list(self.jumps),
            "constant": self.constant,
            "ac_segments": [seg.to_json() for seg in self.ac_segments],
        }

    @classmethod
    def from_json(cls, data: dict) -> "RoofFunction":
        if not isinstance(data, dict):
            raise RoofSpecError("roof description must be a JSON object")
        try:
            return cls(
                tuple(float(b) for b in data.get("breakpoints", [])),
                tuple(float(d) for d in data.get("jumps", [])),
                float(data.get("constant", 0.0)),
                tuple(ACSegment.from_json(s) for s in data.get("ac_segments", [])),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, RoofSpecError):
                raise
            raise RoofSpecError(str(exc)) from exc


def trig(amplitude: float, frequency: int = 1, phase: float = 0.0) -> ACSegment:
    return ACSegment("trig", {"amplitude": float(amplitude), "frequency": int(frequency), "phase": float(phase)})


def bump(a: float, b: float, height: float) -> ACSegment:
    """Quadratic ``height * 4 (x-a)(b-x)/(b-a)^2`` supported on ``[a, b]``."""
    s = 4.0 * height / (b - a) ** 2
    coeffs = [-s * a * b, s * (a + b), -s]
    return ACSegment("poly", {"coefficients": coeffs}, (float(a), float(b)))


NAMED_ROOFS = {
    "canonical": lambda: RoofFunction((0.0,), (1.0,), 1.0),
    "constant": lambda: RoofFunction((), (), 1.0),
    "canonical_sin": lambda: RoofFunction((0.0,), (1.0,), 1.0, (trig(0.1, 1),)),
}


def load_roof(spec: Any) -> RoofFunction:
    """Build a roof from a name, a JSON dict, or a path to a JSON file."""
    if isinstance(spec, RoofFunction):
        return spec
    if isinstance(spec, dict):
        return RoofFunction.from_json(spec)
    if isinstance(spec, (str, Path)):
        key = str(spec)
        if key in NAMED_ROOFS:
            return NAMED_ROOFS[key]()
        path = Path(key)
        if path.exists():
            with path.open() as fh:
                return RoofFunction.from_json(json.load(fh))
        raise RoofSpecError(f"unknown roof {key!r}")
    raise RoofSpecError(f"cannot build a roof from {type(spec).__name__}")


def roof_from_parts(breakpoints: Iterable[float], jumps: Iterable[float], constant: float,
                    segments: Iterable[ACSegment] = ()) -> RoofFunction:
    return RoofFunction(tuple(breakpoints), tuple(jumps), constant, tuple(segments))
