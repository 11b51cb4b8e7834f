"""Planar flows behind the special-flow picture.

``singular``: ``dz/dt = i (z - 1)/z``, i.e.
``x' = -y/r^2``, ``y' = (x(x - 1) + y^2)/r^2``, with first integral
``H = e^{2x} (y^2 + (x - 1)^2)/2``, invariant density ``e^{2x} r^2``, a
center at ``(1, 0)`` and a separatrix loop through the origin.

``normalized``: ``dz/dt = 1/z``, the local model at the origin, along which
``z^2`` moves at constant speed 2, so the first return to ``|z| = r`` from
``r e^{i theta}`` takes ``-r^2 cos(2 theta)``.

Both are integrated with DOP853. Within ``r_switch`` of the origin the field
is multiplied by ``|z|^2`` (a polynomial field in an auxiliary time ``s``)
and physical time is carried as a third state component with
``dt/ds = |z|^2``. Events are located by sign change on the dense output
and bisection.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import DOP853, quad
from scipy.optimize import brentq

from .errors import NoReturnError, SingularityError, StepFailureError

R_SWITCH = 0.05
R_CORE = 1e-9
_HYSTERESIS = 1.5
_EVENT_TOL = 1e-12
_SUBSAMPLES = 8


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

def field_singular(x, y):
    """``(-y/r^2, (x(x-1) + y^2)/r^2)``; works on complex inputs for complex-step use."""
    r2 = x * x + y * y
    if np.any(r2 == 0):
        raise SingularityError("the field is singular at the origin")
    return -y / r2, (x * (x - 1) + y * y) / r2


def field_singular_rescaled(x, y):
    """``|z|^2`` times :func:`field_singular`: ``i (z - 1) conj(z)``."""
    return -y, x * (x - 1) + y * y


def field_normalized(x, y):
    r2 = x * x + y * y
    if np.any(r2 == 0):
        raise SingularityError("the field is singular at the origin")
    return x / r2, -y / r2


def field_normalized_rescaled(x, y):
    return x, -y


SYSTEMS: dict[str, tuple[Callable, Callable]] = {
    "singular": (field_singular, field_singular_rescaled),
    "normalized": (field_normalized, field_normalized_rescaled),
}


def hamiltonian(x, y):
    return 0.5 * np.exp(2 * x) * (y * y + (x - 1) ** 2)


def hamiltonian_gradient(x, y):
    e = np.exp(2 * x)
    return e * (y * y + (x - 1) ** 2 + (x - 1)), e * y


def liouville_density(x, y):
    return np.exp(2 * x) * (x * x + y * y)


def energy_rate(x, y):
    """``H_x x' + H_y y'`` from the analytic gradient."""
    hx, hy = hamiltonian_gradient(x, y)
    fx, fy = field_singular(x, y)
    return hx * fx + hy * fy


def density_flux_divergence(x, y, h: float = 1e-30):
    """``div(rho * F)`` by complex-step differentiation (no cancellation error)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def flux(xx, yy):
        fx, fy = field_singular(xx, yy)
        rho = liouville_density(xx, yy)
        return rho * fx, rho * fy

    dx = np.imag(flux(x + 1j * h, y + 0j)[0]) / h
    dy = np.imag(flux(x + 0j, y + 1j * h)[1]) / h
    return dx + dy


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

@dataclass
class PlanarState:
    x: float
    y: float
    t: float = 0.0

    @property
    def r(self) -> float:
        return math.hypot(self.x, self.y)


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    switches: int = 0
    status: str = "done"

    @property
    def H(self) -> np.ndarray:
        return hamiltonian(self.x, self.y)

    @property
    def end(self) -> PlanarState:
        return PlanarState(float(self.x[-1]), float(self.y[-1]), float(self.t[-1]))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "H"])
            for row in zip(self.t, self.x, self.y, self.H):
                w.writerow([repr(float(v)) for v in row])


@dataclass
class _Event:
    """Stop when ``fn(x, y, t)`` crosses zero in ``direction`` (+1 up, -1 down)."""

    fn: Callable
    direction: int
    accept: Callable | None = None
    name: str = ""


def _make_rhs(fieldfn, rescaled: bool, sign: float):
    if rescaled:
        def rhs(_, u):
            fx, fy = fieldfn(u[0], u[1])
            return np.array([fx, fy, u[0] * u[0] + u[1] * u[1]])
    else:
        def rhs(_, u):
            fx, fy = fieldfn(u[0], u[1])
            return np.array([fx, fy, 1.0])
    return rhs


def _crossed(prev: float, cur: float, direction: int) -> bool:
    if direction > 0:
        return prev < 0.0 <= cur
    return prev > 0.0 >= cur


def _drive(system: str, start: PlanarState, direction: int, t_stop: float | None,
           events: Sequence[_Event], tol: float, r_switch: float = R_SWITCH,
           max_steps: int = 200_000, chart: float | None = None, record: bool = True):
    """Integrate until ``t_stop`` (physical time) or the first accepted event.

    Returns ``(trajectory, event_name or None)``.
    """
    direct_f, rescaled_f = SYSTEMS[system]
    u = np.array([start.x, start.y, start.t], dtype=float)
    if u[0] == 0.0 and u[1] == 0.0:
        raise SingularityError("cannot start at the origin")
    rescaled = math.hypot(u[0], u[1]) < r_switch
    ts, xs, ys = [u[2]], [u[0]], [u[1]]
    switches = 0
    steps = 0
    rtol, atol = tol, tol * 1e-3

    while True:
        rhs = _make_rhs(rescaled_f if rescaled else direct_f, rescaled, direction)
        if rescaled:
            bound = direction * 1e12
        else:
            bound = (t_stop if t_stop is not None else u[2] + direction * 1e12) - u[2]
        if not rescaled and t_stop is not None and (t_stop - u[2]) * direction <= 0:
            break
        solver = DOP853(rhs, 0.0, u.copy(), bound, rtol=rtol, atol=atol)
        r_limit = r_switch * _HYSTERESIS if rescaled else r_switch
        switch_ev = _Event(lambda x, y, t: x * x + y * y - r_limit ** 2, 1 if rescaled else -1,
                           name="switch")
        all_events = list(events) + [switch_ev]
        if rescaled:
            all_events.append(_Event(lambda x, y, t: x * x + y * y - R_CORE ** 2, -1, name="core"))
        if rescaled and t_stop is not None:
            all_events.append(_Event(lambda x, y, t: (t - t_stop) * direction, 1, name="t_stop"))
        prev_vals = [ev.fn(u[0], u[1], u[2]) for ev in all_events]
        switched = False
        while solver.status == "running":
            msg = solver.step()
            steps += 1
            if solver.status == "failed":
                raise StepFailureError(f"integrator failed: {msg}")
            if steps > max_steps:
                raise StepFailureError("step budget exhausted")
            sol = solver.dense_output()
            grid = np.linspace(solver.t_old, solver.t, _SUBSAMPLES + 1)
            vals = sol(grid)
            hit = None
            for i in range(1, grid.size):
                for k, ev in enumerate(all_events):
                    cur = ev.fn(vals[0, i], vals[1, i], vals[2, i])
                    before = prev_vals[k] if i == 1 else ev.fn(vals[0, i - 1], vals[1, i - 1], vals[2, i - 1])
                    if _crossed(before, cur, ev.direction):
                        a, b = grid[i - 1], grid[i]
                        g = lambda s, ev=ev: ev.fn(*sol(s))
                        while abs(b - a) > _EVENT_TOL * max(1.0, abs(a)):
                            m = 0.5 * (a + b)
                            if _crossed(before, g(m), ev.direction):
                                b = m
                            else:
                                a = m
                        state = sol(b)
                        if ev.accept is None or ev.accept(*state):
                            if hit is None or (b - hit[1]) * np.sign(bound) < 0:
                                hit = (ev, b, state)
                if hit is not None:
                    break
            if hit is not None:
                ev, s_hit, state = hit
                u = np.asarray(state, dtype=float)
                ts.append(u[2]), xs.append(u[0]), ys.append(u[1])
                if ev.name == "core":
                    raise NoReturnError("orbit runs into the singularity")
                if ev.name == "switch":
                    rescaled = not rescaled
                    switches += 1
                    switched = True
                    break
                if ev.name == "t_stop":
                    u[2] = t_stop
                    ts[-1] = t_stop
                    return Trajectory(np.array(ts), np.array(xs), np.array(ys), switches), None
                return Trajectory(np.array(ts), np.array(xs), np.array(ys), switches), ev.name
            u = solver.y.copy()
            prev_vals = [ev.fn(u[0], u[1], u[2]) for ev in all_events]
            if record:
                ts.append(u[2]), xs.append(u[0]), ys.append(u[1])
            if chart is not None and math.hypot(u[0], u[1]) > chart:
                raise NoReturnError("trajectory left the chart")
        if not switched:
            break
    return Trajectory(np.array(ts), np.array(xs), np.array(ys), switches), None


def integrate(state: PlanarState, T: float, tol: float = 1e-9, system: str = "singular",
              r_switch: float = R_SWITCH) -> Trajectory:
    """Trajectory over physical time ``[t0, t0 + T]`` (``T`` may be negative)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if T == 0:
        return Trajectory(np.array([state.t]), np.array([state.x]), np.array([state.y]))
    direction = 1 if T > 0 else -1
    traj, _ = _drive(system, state, direction, state.t + T, (), tol, r_switch)
    return traj


def integrate_rescaled_only(state: PlanarState, T: float, tol: float = 1e-9,
                            system: str = "singular") -> Trajectory:
    """Same trajectory using the rescaled field everywhere (cross-check)."""
    return integrate(state, T, tol, system, r_switch=math.inf)


def integrate_direct_only(state: PlanarState, T: float, tol: float = 1e-9,
                          system: str = "singular") -> Trajectory:
    return integrate(state, T, tol, system, r_switch=0.0)


def orbit_period(state: PlanarState, tol: float = 1e-10, center=(1.0, 0.0),
                 max_time: float = 1e3) -> tuple[float, PlanarState]:
    """Time to come back to the ray from ``center`` through ``state``."""
    cx, cy = center
    vx, vy = state.x - cx, state.y - cy
    fx, fy = field_singular(state.x, state.y)
    turn = 1 if (vx * fy - vy * fx) > 0 else -1  # orientation of rotation about the center

    def accept(x, y, t):
        return (x - cx) * vx + (y - cy) * vy > 0 and t > state.t

    # signed sine of the angle from the start ray, oriented with the motion: it
    # leaves 0 upward, goes negative after half a turn and crosses upward again
    # on the start ray after a full turn
    ev = _Event(lambda x, y, t: turn * (vx * (y - cy) - vy * (x - cx)), 1, accept, "period")
    traj, name = _drive("singular", state, 1, state.t + max_time, (ev,), tol)
    if name != "period":
        raise NoReturnError("no return to the start ray within max_time")
    return float(traj.t[-1] - state.t), traj.end


# ---------------------------------------------------------------------------
# first return to a circle
# ---------------------------------------------------------------------------

@dataclass
class ReturnEvent:
    r: float
    theta: float
    return_time: float
    exit_theta: float
    exit_r: float
    system: str = ""


def first_return_closed(r: float, theta: float) -> float:
    """``-r^2 cos(2 theta)``; negative means the return lies in the past."""
    return -r * r * math.cos(2 * theta)


def first_return_numeric(system: str, r: float, theta: float, tol: float = 1e-10,
                         max_time: float | None = None, chart: float | None = None,
                         grazing_tol: float = 1e-9) -> ReturnEvent:
    """Time from ``r e^{i theta}`` back to the circle ``|z| = r`` through its inside.

    The integration direction is chosen so that the orbit enters the disk:
    forward when the radial velocity is negative, backward when positive.
    The returned time is signed accordingly.
    """
    if system not in SYSTEMS:
        raise ValueError(f"unknown system {system!r}")
    x0, y0 = r * math.cos(theta), r * math.sin(theta)
    fx, fy = SYSTEMS[system][0](x0, y0)
    vr = (x0 * fx + y0 * fy) / r
    speed = math.hypot(fx, fy)
    if abs(vr) <= grazing_tol * speed:
        raise NoReturnError("start point is tangent to the circle (separatrix direction)")
    direction = -1 if vr > 0 else 1
    if max_time is None:
        max_time = 10.0 * r * r + 10.0
    ev = _Event(lambda x, y, t: x * x + y * y - r * r, 1, None, "return")
    start = PlanarState(x0, y0, 0.0)
    traj, name = _drive(system, start, direction, direction * max_time, (ev,), tol,
                        chart=chart if chart is not None else 4 * r, record=False)
    if name != "return":
        raise NoReturnError("no return within the time limit")
    end = traj.end
    return ReturnEvent(r, theta, end.t, math.atan2(end.y, end.x), end.r, system)


def return_time_table(r: float, thetas: Sequence[float], tol: float = 1e-10) -> list[dict]:
    rows = []
    for th in thetas:
        ev = first_return_numeric("normalized", r, th, tol)
        closed = first_return_closed(r, th)
        rows.append({"r": r, "theta": th, "tau_numeric": ev.return_time, "tau_closed": closed,
                     "abs_err": abs(ev.return_time - closed)})
    return rows


def safe_thetas(count: int, margin: float = 0.05) -> np.ndarray:
    """``count`` angles at distance >= ``margin`` from every odd multiple of pi/4."""
    out = []
    grid = np.linspace(0.0, 2 * np.pi, 4 * count + 1)[:-1] + np.pi / (8 * count)
    for th in grid:
        off = (th - np.pi / 4) % (np.pi / 2)
        if min(off, np.pi / 2 - off) >= margin:
            out.append(th)
    idx = np.linspace(0, len(out) - 1, count).round().astype(int)
    return np.asarray(out)[idx]


# ---------------------------------------------------------------------------
# separatrix loop
# ---------------------------------------------------------------------------

SEPARATRIX_XMAX = brentq(lambda x: math.exp(-x) - (x - 1), 1.0, 2.0)


def _exp_excess(x: float) -> float:
    """``e^{-2x} - 1 + 2x`` without cancellation for small x."""
    t = -2.0 * x
    if abs(t) < 0.5:
        term, acc, k = 0.5, 0.0, 0
        while abs(term) > 1e-18:
            acc += term
            k += 1
            term *= t / (k + 2)
        return t * t * acc
    return math.expm1(t) - t


def _loop_y(x: float) -> float:
    """Height of the ``H = 1/2`` loop above ``x`` in ``[0, xmax]``."""
    if x < 0.5 * SEPARATRIX_XMAX:
        return math.sqrt(max(0.0, _exp_excess(x) - x * x))
    # near the turning point write x = xmax - v and use e^{-xmax} = xmax - 1
    a = SEPARATRIX_XMAX - 1
    v = SEPARATRIX_XMAX - x
    return math.sqrt(max(0.0, a * a * math.expm1(2 * v) + 2 * a * v - v * v))


def separatrix_time_quadrature() -> float:
    """``2 int_0^{xmax} (x^2 + Y^2)/Y dx`` with ``Y = sqrt(e^{-2x} - (x-1)^2)``.

    Substituting ``x = xmax - u^2`` removes the square-root endpoint.
    """
    xm = SEPARATRIX_XMAX

    a = xm - 1

    def integrand(u):
        v = u * u
        x = xm - v
        if x <= 0:
            return 0.0
        # Y/u stays bounded: Y^2 = a^2 expm1(2v) + 2 a v - v^2
        ratio2 = (a * a * math.expm1(2 * v) / v if v > 0 else 2 * a * a) + 2 * a - v
        Y = u * math.sqrt(max(ratio2, 0.0))
        return (x * x + Y * Y) * 2 / math.sqrt(max(ratio2, 1e-300))

    val, _ = quad(integrand, 0.0, math.sqrt(xm), epsabs=1e-14, epsrel=1e-13, limit=400)
    return 2 * val


def _separatrix_shadow(eta: float, tol: float) -> float:
    """Time from the loop point at ``|z| = eta`` (lower branch) back to ``|z| = eta``."""
    x_eta = brentq(lambda x: _exp_excess(x) - eta * eta, 0.0, SEPARATRIX_XMAX, xtol=1e-16)
    start = PlanarState(x_eta, -_loop_y(x_eta), 0.0)
    ev = _Event(lambda x, y, t: x * x + y * y - eta * eta, -1,
                lambda x, y, t: t > 0, "back")
    traj, name = _drive("singular", start, 1, 100.0, (ev,), tol, record=False)
    if name != "back":
        raise NoReturnError("shadow orbit did not come back")
    return float(traj.t[-1])


def separatrix_return_time(etas: Sequence[float] = (0.04, 0.02, 0.01), tol: float = 1e-12) -> dict:
    """Estimate of the loop time by shadowing at offsets ``eta`` and Richardson
    extrapolation in ``eta^2`` (the missing time near the origin is ``O(eta^2)``)."""
    etas = list(etas)
    times = [_separatrix_shadow(e, tol) for e in etas]
    rich = [(e1 * e1 * t2 - e2 * e2 * t1) / (e1 * e1 - e2 * e2)
            for e1, e2, t1, t2 in zip(etas[:-1], etas[1:], times[:-1], times[1:])]
    estimate = rich[-1]
    err = abs(rich[-1] - rich[-2]) if len(rich) > 1 else abs(times[-1] - rich[-1])
    return {"tau0": estimate, "error_estimate": err, "etas": etas, "shadow_times": times,
            "richardson": rich}


# ---------------------------------------------------------------------------
# linear flow on the torus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearSectionMap:
    """First-return data of ``(x1, x2) -> (x1 + t alpha, x2 + t)`` to ``{x2 = 0}``."""

    alpha: float

    def return_time(self, x):
        return np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0

    def __call__(self, x):
        v = np.mod(np.asarray(x, dtype=float) + self.alpha, 1.0)
        return float(v) if np.ndim(v) == 0 else v

    def iterate(self, x: float, n: int) -> float:
        v = (x + n * self.alpha) % 1.0
        return 0.0 if v >= 1.0 else v

    def describe(self) -> dict:
        return {"return_time": 1.0, "map": "x -> x + alpha mod 1", "alpha": self.alpha}


def linear_section_map(alpha: float) -> tuple[float, LinearSectionMap]:
    return 1.0, LinearSectionMap(float(alpha))
