"""Witnesses for the drift-and-realign behaviour of nearby orbit pairs.

For two close base points the Birkhoff sums of a roof with nonzero jump sum
``S`` separate linearly, ``f^(n)(y) - f^(n)(x) ~ n S (y - x) - dbar_n``,
where ``dbar_n`` collects the jumps met in between. Once ``n S |y - x|``
reaches a fixed ``p`` there is a long run of indices on which the
difference stays within ``epsilon`` of ``sgn(S) p - d`` for a fixed
``d`` from the finite set ``D`` of attainable jump counts. This module
sizes the constants, scans for that run (the base witness) and checks
that the corresponding flow orbits are realigned by the time shift for
most integer multiples of ``gamma`` in the matching time window.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .arithmetic import (Rotation, bounded_type_constant, count_orbit_in_arc, dist_to_int,
                         wrap)
from .cocycle import ac_uniform_smallness, birkhoff, jump_count, orbit
from .errors import (DegeneratePairError, NoAdmissiblePError, OutOfDeltaError, SameOrbitError,
                     ScaleError, SpecflowError, ZeroJumpSumError)
from .flow import FlowPoint, advance, metric, orbit_samples
from .roof import RoofFunction

MAX_SCAN = 1 << 24
SAME_ORBIT_TOL = 1e-12
SAME_ORBIT_RANGE = 10 ** 6
_D_DIGITS = 12


@dataclass(frozen=True)
class RatnerConfig:
    rot: Rotation
    f: RoofFunction
    epsilon: float
    N: int
    gamma: float
    C: int
    k: int
    S: float
    D: tuple[float, ...]
    p: float
    kappa: float
    delta: float
    s0: int
    c_f: float
    C_f: float
    lift: str = "direct"
    eps_base: float = 0.0
    same_orbit_range: int = SAME_ORBIT_RANGE

    @property
    def sgn_S(self) -> float:
        return 1.0 if self.S > 0 else -1.0

    def shifts(self) -> tuple[float, ...]:
        """The set ``(sgn(S) p - D) u (-sgn(S) p + D)``."""
        a = [self.sgn_S * self.p - d for d in self.D]
        return tuple(sorted(set(a) | {-v for v in a}))

    def to_json(self) -> dict:
        return {
            "alpha": self.rot.source,
            "depth": self.rot.depth,
            "C": self.C,
            "C_depth_surrogate": True,
            "k": self.k,
            "S": self.S,
            "D": list(self.D),
            "p": self.p,
            "epsilon": self.epsilon,
            "eps_base": self.eps_base,
            "N": self.N,
            "gamma": self.gamma,
            "kappa": self.kappa,
            "delta": self.delta,
            "s0": self.s0,
            "q_s0": self.rot.q[self.s0],
            "c_f": self.c_f,
            "C_f": self.C_f,
            "lift": self.lift,
            "same_orbit_range": self.same_orbit_range,
        }


def jump_sumset(jumps, C: int) -> tuple[float, ...]:
    """``{n_1 d_1 + ... + n_k d_k : 0 <= n_i <= 2C + 1}`` (rounded to 12 digits)."""
    vals = {0.0}
    for d in jumps:
        vals = {round(v + n * d, _D_DIGITS) for v in vals for n in range(2 * C + 2)}
    return tuple(sorted(v + 0.0 for v in vals))


def choose_p(D, S: float) -> float:
    """Midpoint of the largest gap of ``(0, |S|)`` minus ``D u -D``."""
    top = abs(S)
    cut = sorted({v for v in itertools.chain(D, (-d for d in D)) if 0.0 < v < top})
    edges = [0.0, *cut, top]
    gaps = [(b - a, a, b) for a, b in zip(edges[:-1], edges[1:])]
    width, a, b = max(gaps, key=lambda g: (g[0], -g[1]))
    if width <= 1e-12 * max(1.0, top):
        raise NoAdmissiblePError("no room for p in (0, |S|) outside D and -D")
    return (a + b) / 2


def build_config(rot: Rotation, f: RoofFunction, epsilon: float, N: int, gamma: float = 1.0,
                 lift: str = "direct", same_orbit_range: int = SAME_ORBIT_RANGE) -> RatnerConfig:
    """Size ``D, p, kappa, s0, delta`` for the roof and rotation.

    ``kappa = min(eps/(2pC), 1/C^2) / (k(2C+1))``; ``s0`` is the first index
    with ``min(kappa, 1) q_s0 > N`` whose sampled AC oscillation is below
    ``eps/2``; ``delta = p/(|S| q_{s0+1})``. With ``lift="scaled"`` the
    base tolerance and ``N`` are first converted from flow to base scale
    (``eps1 = min(c_f eps/(8(gamma + C_f)), eps/16)``, ``N' = ceil(2 gamma N/c_f)``);
    ``lift="direct"`` uses ``eps`` and ``N`` as given.
    """
    S = f.sum_of_jumps()
    if S == 0.0:
        raise ZeroJumpSumError("the roof has zero sum of jumps")
    if lift not in ("direct", "scaled"):
        raise ValueError("lift must be 'direct' or 'paper'")
    c_f, C_f, _ = f.bounds()
    C = bounded_type_constant(rot)
    k = f.k
    if lift == "scaled":
        eps_base = min(c_f * epsilon / (8 * (gamma + C_f)), epsilon / 16)
        N_base = math.ceil(2 * gamma * N / c_f)
    else:
        eps_base, N_base = float(epsilon), int(N)
    D = jump_sumset(f.jumps, C)
    p = choose_p(D, S)
    kappa = min(eps_base / (2 * p * C), 1.0 / C ** 2) / (k * (2 * C + 1))
    _, f_ac = f.decompose()
    s0 = None
    for s in range(1, rot.depth):
        if min(kappa, 1.0) * rot.q[s] <= N_base:
            continue
        if f_ac.ac_segments and ac_uniform_smallness(rot, f_ac, s) >= eps_base / 2:
            continue
        s0 = s
        break
    if s0 is None:
        raise ScaleError(f"no admissible s0 within depth {rot.depth}")
    delta = p / (abs(S) * rot.q[s0 + 1])
    return RatnerConfig(rot, f, float(epsilon), int(N_base), float(gamma), C, k, S, D, p,
                        kappa, delta, s0, c_f, C_f, lift, eps_base, int(same_orbit_range))


# ---------------------------------------------------------------------------
# base level
# ---------------------------------------------------------------------------

@dataclass
class RatnerWitness:
    x: float
    y: float
    success: bool
    reason: str = ""
    orientation: int = 1
    ell: float = 0.0
    s: int = -1
    q_s: int = 0
    q_s1: int = 0
    d: float = float("nan")
    shift: float = float("nan")
    M_prime: int = 0
    L_prime: int = -1
    J_size: int = 0
    ratio: float = 0.0
    max_error: float = float("nan")
    step_residual: float = float("nan")
    d_constant: bool = False
    d_in_D: bool = False
    # flow level
    M: float = float("nan")
    L: float = float("nan")
    window_count: int = 0
    hits: int = 0
    hit_fraction: float = float("nan")
    flow_ratio: float = float("nan")
    base_ratio: float = float("nan")
    b_set_size: int = 0
    b_set_misses: int = 0
    flow_success: bool = False
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = asdict(self)
        out.pop("extra")
        out.update(self.extra)
        return out


def _orient(x: float, y: float) -> tuple[float, float, int, Fraction]:
    fwd = (Fraction(y) - Fraction(x)) % 1
    if fwd == 0:
        raise DegeneratePairError("x and y coincide on the circle")
    if fwd <= Fraction(1, 2):
        return x, y, 1, fwd
    return y, x, -1, 1 - fwd


def same_orbit(rot: Rotation, x: float, y: float, m_max: int, tol: float = SAME_ORBIT_TOL) -> bool:
    """Is ``||y - x - m alpha|| < tol`` for some ``0 < |m| <= m_max``?"""
    m_max = int(min(m_max, rot.q[-1] // 4 - 1))
    if m_max < 1:
        return False
    z = Fraction(wrap(x + rot.frac_multiple(-m_max)))
    n = 2 * m_max + 1
    lo, hi = Fraction(y) - Fraction(tol), Fraction(y) + Fraction(tol)
    arcs = []
    if lo < 0:
        arcs += [(Fraction(0), hi), (lo + 1, Fraction(1))]
    elif hi > 1:
        arcs += [(lo, Fraction(1)), (Fraction(0), hi - 1)]
    else:
        arcs.append((lo, hi))
    hits = sum(count_orbit_in_arc(rot, z, n, a, b) for a, b in arcs)
    # m = 0 is always a hit when y == x; that case is rejected earlier
    return hits - (1 if dist_to_int(y - x) < tol else 0) > 0


def _scale_index(cfg: RatnerConfig, ell: Fraction) -> int:
    p = Fraction(cfg.p)
    S = abs(Fraction(cfg.S))
    q = cfg.rot.q
    for s in range(len(q) - 1):
        if p / (S * q[s + 1]) < ell <= p / (S * q[s]):
            return s
    raise ScaleError(f"pair distance {float(ell):.3e} needs more continued fraction depth")


def _runs(good: np.ndarray, dbar: np.ndarray) -> tuple[int, int]:
    """Longest run of ``good`` with constant ``dbar``: (start, length)."""
    if not good.any():
        return 0, 0
    n = good.size
    brk = np.ones(n + 1, dtype=bool)
    brk[1:n] = (good[1:] != good[:-1]) | (dbar[1:] != dbar[:-1])
    starts = np.flatnonzero(brk[:-1])
    ends = np.append(starts[1:], n)
    lengths = np.where(good[starts], ends - starts, 0)
    i = int(np.argmax(lengths))
    return int(starts[i]), int(lengths[i])


def base_witness(cfg: RatnerConfig, x: float, y: float) -> RatnerWitness:
    """Longest run ``J`` in ``[q_s, q_{s+1}]`` realising the shift ``sgn(S) p - d``.

    ``s`` is fixed by ``p/(|S| q_{s+1}) < ||x - y|| <= p/(|S| q_s)`` (checked
    with exact rationals). The differences are formed as upper minus lower
    point of the short arc; ``shift`` is the time by which the orbit of
    ``y`` must be advanced to meet the orbit of ``x``.
    """
    rot, f = cfg.rot, cfg.f
    lower, upper, sigma, ell = _orient(x, y)
    if ell >= Fraction(cfg.delta):
        raise OutOfDeltaError(f"||x - y|| = {float(ell):.6e} is not below delta = {cfg.delta:.6e}")
    if same_orbit(rot, x, y, cfg.same_orbit_range):
        raise SameOrbitError("x and y lie on the same rotation orbit")
    s = _scale_index(cfg, ell)
    q_s, q_s1 = rot.q[s], rot.q[s + 1]
    if q_s1 - q_s > MAX_SCAN:
        raise ScaleError(f"scan length {q_s1 - q_s} exceeds {MAX_SCAN}")
    ell_f = float(ell)
    wit = RatnerWitness(x=float(x), y=float(y), success=False, orientation=sigma, ell=ell_f,
                        s=s, q_s=q_s, q_s1=q_s1)

    # Birkhoff difference along n = q_s .. q_s1
    lo_pts = orbit(rot, lower, q_s, q_s1)
    up_pts = orbit(rot, upper, q_s, q_s1)
    anchor = birkhoff(rot, f, q_s, upper) - birkhoff(rot, f, q_s, lower)
    delta_n = anchor + np.concatenate(([0.0], np.cumsum(f(up_pts) - f(lo_pts))))

    # jump mass in (lower, upper] along the same range
    back = rot.frac_multiples(-np.arange(q_s, q_s1, dtype=np.int64))
    incr = np.zeros(q_s1 - q_s)
    for b, d in zip(f.breakpoints, f.jumps):
        w = wrap(wrap(b + back) - lower)
        incr += d * ((w > 0.0) & (w <= ell_f))
    d0 = jump_count(rot, f, q_s, lower, upper)
    dbar = np.round(d0 + np.concatenate(([0.0], np.cumsum(incr))), _D_DIGITS)

    f_pl, _ = f.decompose()
    step = f_pl(up_pts) - f_pl(lo_pts) + incr - cfg.S * ell_f
    wit.step_residual = float(np.max(np.abs(step))) if step.size else 0.0

    target = cfg.sgn_S * cfg.p - dbar
    err = np.abs(delta_n - target)
    good = err < cfg.eps_base
    start, length = _runs(good, dbar)
    if length == 0:
        wit.reason = "no index in [q_s, q_s+1] realises a shift"
        return wit
    J = slice(start, start + length)
    d = float(dbar[start])
    wit.d = d
    wit.shift = sigma * (cfg.sgn_S * cfg.p - d)
    wit.M_prime = q_s + start
    wit.L_prime = length - 1
    wit.J_size = length
    wit.ratio = length / q_s1
    wit.max_error = float(err[J].max())
    wit.d_constant = bool(np.all(dbar[J] == d))
    wit.d_in_D = any(abs(d - v) <= 1e-9 for v in cfg.D)
    problems = []
    if wit.ratio < cfg.kappa:
        problems.append(f"|J|/q_s+1 = {wit.ratio:.4g} below kappa")
    if wit.M_prime < cfg.N or wit.L_prime < cfg.N:
        problems.append("M' or L' below N")
    if not wit.d_in_D:
        problems.append(f"d = {d} not in D")
    wit.success = not problems
    wit.reason = "; ".join(problems)
    return wit


# ---------------------------------------------------------------------------
# flow level
# ---------------------------------------------------------------------------

def _flow_states(rot, f, x, s, times):
    """States at many times; falls back to ``advance`` for negative times."""
    times = np.asarray(times, dtype=float)
    neg = times < 0
    n = np.zeros(times.size, dtype=np.int64)
    xs = np.zeros(times.size)
    hs = np.zeros(times.size)
    if (~neg).any():
        n[~neg], xs[~neg], hs[~neg] = orbit_samples(rot, f, x, s, times[~neg])
    for i in np.flatnonzero(neg):
        q = advance(FlowPoint(x, s), float(times[i]), rot, f)
        xs[i], hs[i], n[i] = q.x, q.s, -1
    return n, xs, hs


def flow_witness(cfg: RatnerConfig, p1: FlowPoint, p2: FlowPoint) -> RatnerWitness:
    """Lift a base witness to the flow and count realigned time steps.

    The window is ``M = (f^(M')(x) - s)/gamma`` and
    ``L = (f^(M'+L')(x) - f^(M')(x))/gamma``; a step ``k`` is a hit when
    ``d(T_{k gamma} p1, T_{k gamma + shift} p2) < epsilon``.
    """
    rot, f = cfg.rot, cfg.f
    dist = metric(p1, p2)
    if dist_to_int(p1.x - p2.x) == 0:
        raise DegeneratePairError("base points coincide")
    if not dist < cfg.delta:
        raise OutOfDeltaError(f"d(p1, p2) = {dist:.6e} is not below delta = {cfg.delta:.6e}")
    wit = base_witness(cfg, p1.x, p2.x)
    if wit.J_size == 0:
        return wit
    g = cfg.gamma
    F_start = birkhoff(rot, f, wit.M_prime, p1.x)
    F_end = birkhoff(rot, f, wit.M_prime + wit.L_prime, p1.x)
    M = (F_start - p1.s) / g
    L = (F_end - F_start) / g
    ks = np.arange(math.ceil(M), math.floor(M + L) + 1, dtype=np.int64)
    wit.M, wit.L = float(M), float(L)
    wit.window_count = int(ks.size)
    if ks.size == 0:
        wit.reason = (wit.reason + "; " if wit.reason else "") + "empty flow window"
        return wit
    t1 = ks * g
    n1, x1, h1 = _flow_states(rot, f, p1.x, p1.s, t1)
    _, x2, h2 = _flow_states(rot, f, p2.x, p2.s, t1 + wit.shift)
    dists = dist_to_int(x1 - x2) + np.abs(h1 - h2)
    hit = dists < cfg.epsilon
    wit.hits = int(hit.sum())
    wit.hit_fraction = wit.hits / ks.size
    wit.flow_ratio = L / M if M > 0 else float("inf")
    wit.base_ratio = wit.L_prime / wit.M_prime if wit.M_prime > 0 else float("inf")

    # good heights and lap index inside J should always be hits once the base
    # tolerance is below eps/8 (the "scaled" lift); reported for both lifts
    in_J = (n1 >= wit.M_prime) & (n1 <= wit.M_prime + wit.L_prime)
    good_h = (h1 > cfg.epsilon / 8) & (h1 < f(x1) - cfg.epsilon / 8)
    B = in_J & good_h
    wit.b_set_size = int(B.sum())
    wit.b_set_misses = int((B & ~hit).sum())

    problems = [wit.reason] if wit.reason else []
    if not wit.hit_fraction > 1 - cfg.epsilon:
        problems.append(f"hit fraction {wit.hit_fraction:.4f} not above 1 - eps")
    if wit.flow_ratio < (cfg.c_f / cfg.C_f) * cfg.kappa:
        problems.append("L/M below (c_f/C_f) kappa")
    if M < cfg.N or L < cfg.N:
        problems.append("M or L below N")
    wit.flow_success = not problems
    wit.reason = "; ".join(problems)
    return wit


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------

def sample_pairs(cfg: RatnerConfig, pairs: int, seed: int) -> list[tuple[FlowPoint, FlowPoint]]:
    """Random pairs with ``0 < d(p1, p2) < delta`` and heights in the good set."""
    rng = np.random.default_rng(seed)
    eps8 = cfg.epsilon / 8
    out = []
    while len(out) < pairs:
        x = float(rng.random())
        ell = float(rng.uniform(0.0, cfg.delta))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        y = float(wrap(x + sign * ell))
        top = min(cfg.f(x), cfg.f(y)) - eps8
        s = float(rng.uniform(eps8, top))
        room = cfg.delta - float(dist_to_int(y - x))
        s2 = float(s + rng.uniform(-0.5, 0.5) * room)
        p1, p2 = FlowPoint(x, s), FlowPoint(y, s2)
        d = metric(p1, p2)
        if 0.0 < dist_to_int(y - x) and d < cfg.delta and 0.0 <= s2 < cfg.f(y):
            out.append((p1, p2))
    return out


def _run_pair(args) -> dict:
    cfg, idx, p1, p2 = args
    try:
        wit = flow_witness(cfg, p1, p2)
        row = wit.to_json()
        row["ok"] = bool(wit.success and wit.flow_success)
    except SpecflowError as exc:
        row = {"x": p1.x, "y": p2.x, "ok": False, "reason": f"{type(exc).__name__}: {exc}"}
    row.update({"index": idx, "s_1": p1.s, "s_2": p2.s})
    return row


def _quantiles(values) -> dict:
    vals = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    if vals.size == 0:
        return {}
    qs = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)
    return {f"q{int(q * 100):02d}": float(np.quantile(vals, q)) for q in qs}


def ratner_scan(cfg: RatnerConfig, pairs: int, seed: int, threads: int = 1,
                keep_rows: bool = False) -> dict:
    """Witness statistics over random pairs; deterministic given ``seed``."""
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    sample = sample_pairs(cfg, pairs, seed)
    tasks = [(cfg, i, p1, p2) for i, (p1, p2) in enumerate(sample)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(_run_pair, tasks, chunksize=max(1, pairs // (4 * threads))))
    else:
        rows = [_run_pair(t) for t in tasks]
    rows.sort(key=lambda r: r["index"])
    ok = [r for r in rows if r["ok"]]
    with_J = [r for r in rows if r.get("J_size", 0) > 0]
    d_counts: dict[str, int] = {}
    for r in with_J:
        key = repr(float(r["d"]))
        d_counts[key] = d_counts.get(key, 0) + 1
    report = {
        "config": cfg.to_json(),
        "pairs": pairs,
        "seed": int(seed),
        "success_rate": len(ok) / pairs,
        "base_success_rate": sum(1 for r in rows if r.get("success")) / pairs,
        "hit_fraction": _quantiles(r["hit_fraction"] for r in with_J),
        "J_ratio": _quantiles(r["ratio"] for r in with_J),
        "flow_ratio": _quantiles(r["flow_ratio"] for r in with_J),
        "d_distribution": dict(sorted(d_counts.items())),
        "empirical_max_kappa": min((r["ratio"] for r in with_J), default=0.0),
        "max_step_residual": max((r["step_residual"] for r in with_J), default=0.0),
        "b_set_misses": sum(r.get("b_set_misses", 0) for r in with_J),
        "failures": [{"index": r["index"], "x": r["x"], "y": r["y"], "reason": r.get("reason", "")}
                     for r in rows if not r["ok"]],
    }
    if keep_rows:
        report["rows"] = rows
    return report
