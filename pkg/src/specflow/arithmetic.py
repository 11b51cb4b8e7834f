"""Continued fractions of the rotation number and exact orbit counting.

The rotation number is held as a certified rational enclosure ``[lo, hi]``
(exact ``Fraction`` endpoints, at least 128 fractional bits wide) so that
partial quotients, convergent inequalities and the occasional
floor/sign decision on ``v + j*alpha`` can be settled exactly. Doubles are
only used on the hot paths, through a two-term split of alpha.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np
from mpmath.ctx_iv import MPIntervalContext

from .errors import OutOfRangeError, PrecisionError, RationalAlphaError, WindowExceededError

NAMED_ALPHAS = {
    "golden": "(sqrt(5)-1)/2",
    "sqrt2m1": "sqrt(2)-1",
    "silver": "sqrt(2)-1",
}

DEFAULT_PREC = 256
MAX_PREC = 8192
_SPLIT_LIMIT = 1 << 26


# ---------------------------------------------------------------------------
# certified evaluation of alpha
# ---------------------------------------------------------------------------

_IV_FUNCS = ("sqrt", "exp", "log", "sin", "cos", "tan", "atan", "cbrt")


def _mpf_to_fraction(raw) -> Fraction:
    sign, man, exp, _ = raw
    if man == 0:
        return Fraction(0)
    man, exp = int(man), int(exp)
    val = Fraction(man << exp) if exp >= 0 else Fraction(man, 1 << -exp)
    return -val if sign else val


def _interval_to_fractions(v) -> tuple[Fraction, Fraction]:
    a, b = v._mpi_
    return _mpf_to_fraction(a), _mpf_to_fraction(b)


def _eval_expression(expr: str, prec: int) -> tuple[Fraction, Fraction]:
    """Evaluate an arithmetic expression in interval arithmetic."""
    ctx = MPIntervalContext()
    ctx.prec = prec
    tree = ast.parse(expr, mode="eval")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            text = ast.get_source_segment(expr, node)
            return ctx.mpf(text if text is not None else repr(node.value))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            val = ev(node.operand)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.BinOp):
            lhs, rhs = ev(node.left), ev(node.right)
            ops = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b,
                   ast.Mult: lambda a, b: a * b, ast.Div: lambda a, b: a / b,
                   ast.Pow: lambda a, b: a ** b}
            for kind, fn in ops.items():
                if isinstance(node.op, kind):
                    return fn(lhs, rhs)
        if isinstance(node, ast.Name) and node.id in ("pi", "e"):
            return ctx.pi if node.id == "pi" else ctx.e
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _IV_FUNCS and len(node.args) == 1 and not node.keywords):
            return getattr(ctx, node.func.id)(ev(node.args[0]))
        raise ValueError(f"unsupported syntax in alpha expression: {ast.dump(node)}")

    return _interval_to_fractions(ev(tree))


def _expand_interval(lo: Fraction, hi: Fraction, depth: int) -> tuple[list[int], bool]:
    """Partial quotients valid for every point of ``[lo, hi]``.

    Returns the quotients and whether the remainder after the last one is
    exactly zero.
    """
    quotients: list[int] = []
    x_lo, x_hi = lo, hi
    for _ in range(depth):
        if x_hi == 0:
            raise RationalAlphaError(
                f"continued fraction terminates after {len(quotients)} quotients")
        if x_lo <= 0:
            raise PrecisionError(f"cannot certify a_{len(quotients) + 1}")
        y_lo, y_hi = 1 / x_hi, 1 / x_lo
        a = math.floor(y_lo)
        if y_hi >= a + 1:
            raise PrecisionError(f"cannot certify a_{len(quotients) + 1}")
        quotients.append(a)
        x_lo, x_hi = y_lo - a, y_hi - a
    return quotients, (x_hi == 0)


def _alpha_enclosure(alpha, prec: int) -> tuple[Fraction, Fraction, str, bool]:
    """Return ``(lo, hi, source, exact)`` for a supported alpha description."""
    if isinstance(alpha, str):
        expr = NAMED_ALPHAS.get(alpha.strip().lower(), alpha)
        lo, hi = _eval_expression(expr, prec)
        return lo, hi, alpha, lo == hi
    if isinstance(alpha, (Fraction, int)):
        val = Fraction(alpha)
        return val, val, str(val), True
    if isinstance(alpha, float):
        val = Fraction(alpha)
        return val, val, repr(alpha), True
    if isinstance(alpha, tuple) and len(alpha) == 2:
        lo, hi = Fraction(alpha[0]), Fraction(alpha[1])
        return lo, hi, f"[{lo}, {hi}]", lo == hi
    if hasattr(alpha, "_mpf_"):
        val = _mpf_to_fraction(alpha._mpf_)
        return val, val, str(alpha), True
    raise TypeError(f"unsupported alpha type {type(alpha).__name__}")


# ---------------------------------------------------------------------------
# Rotation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Rotation:
    """Irrational rotation ``x -> x + alpha`` with exact convergents.

    ``q[n]`` and ``p[n]`` follow ``q_0 = 1, q_1 = a_1, p_0 = 0, p_1 = 1``.
    Everything derived from the expansion is only known up to ``depth``;
    consumers that rely on it should report ``depth``.
    """

    alpha_lo: Fraction
    alpha_hi: Fraction
    partial_quotients: tuple[int, ...]
    p: tuple[int, ...]
    q: tuple[int, ...]
    source: str = ""
    prec: int = DEFAULT_PREC
    terminated: bool = False
    exact_input: bool = False

    @property
    def depth(self) -> int:
        return len(self.partial_quotients)

    @cached_property
    def alpha_mid(self) -> Fraction:
        return (self.alpha_lo + self.alpha_hi) / 2

    @cached_property
    def alpha(self) -> float:
        return float(self.alpha_mid)

    @cached_property
    def _split(self) -> tuple[float, float]:
        hi = Fraction(math.floor(self.alpha_mid * _SPLIT_LIMIT), _SPLIT_LIMIT)
        return float(hi), float(self.alpha_mid - hi)

    @cached_property
    def convergent_errors(self) -> tuple[float, ...]:
        """``alpha - p_n/q_n`` rounded to double, for n = 0..depth."""
        return tuple(float(self.alpha_mid - Fraction(pn, qn)) for pn, qn in zip(self.p, self.q))

    @cached_property
    def _signed_norms(self) -> tuple[float, ...]:
        # q_n*alpha - p_n, which has sign (-1)^n
        return tuple(float(qn * self.alpha_mid - pn) for pn, qn in zip(self.p, self.q))

    # -- orbit coordinates --------------------------------------------------

    def frac_multiple(self, n: int) -> float:
        """``{n * alpha}`` as a double, accurate to a few ulps for any integer n."""
        n = int(n)
        if abs(n) < _SPLIT_LIMIT:
            return float(self.frac_multiples(np.array([n]))[0])
        m = abs(n)
        if m < self.q[-1]:
            digits = ostrowski_digits(m, self)
            acc = math.fsum(b * e for b, e in zip(digits, self._signed_norms) if b)
            val = acc - math.floor(acc)
        else:
            exact = m * self.alpha_mid
            val = float(exact - math.floor(exact))
        if n < 0:
            val = 0.0 if val == 0.0 else 1.0 - val
        return 0.0 if val >= 1.0 else val

    def frac_multiples(self, j: np.ndarray) -> np.ndarray:
        """Vectorised ``{j * alpha}`` for an integer array."""
        j = np.asarray(j, dtype=np.int64)
        big = np.abs(j) >= _SPLIT_LIMIT
        hi, lo = self._split
        jf = j.astype(np.float64)
        t = jf * hi  # exact: 26-bit hi times |j| < 2**26
        out = (t - np.floor(t)) + jf * lo
        out -= np.floor(out)
        out[out >= 1.0] = 0.0
        if big.any():
            out[big] = [self.frac_multiple(int(v)) for v in j[big]]
        return out

    def rotate(self, x, n=1):
        """``T^n x`` on the circle; ``x`` and ``n`` may be arrays."""
        if np.ndim(x) == 0 and np.ndim(n) == 0:
            return wrap(float(x) + self.frac_multiple(int(n)))
        return wrap(np.asarray(x, dtype=float) + self.frac_multiples(np.broadcast_to(n, np.shape(x)) if np.ndim(n) == 0 else n))

    # -- serialisation ------------------------------------------------------

    def to_json(self) -> dict:
        scale = 1 << self.prec
        mant = round(self.alpha_mid * scale)
        return {
            "alpha_hex": f"0x{mant:x}p-{self.prec}",
            "partial_quotients": list(self.partial_quotients),
            "depth": self.depth,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Rotation":
        text = data["alpha_hex"]
        mant_txt, exp_txt = text.lower().split("p-")
        prec = int(exp_txt)
        mant = int(mant_txt, 16)
        lo = Fraction(mant - 1, 1 << prec)
        hi = Fraction(mant + 1, 1 << prec)
        depth = int(data["depth"])
        rot = cf_expand((lo, hi), depth, prec=prec)
        if list(rot.partial_quotients) != list(data["partial_quotients"])[:depth]:
            raise ValueError("partial quotients do not match alpha_hex")
        return Rotation(lo, hi, rot.partial_quotients, rot.p, rot.q,
                        source=text, prec=prec, terminated=rot.terminated)


def wrap(x):
    """Reduce to ``[0, 1)``; guards the ``-tiny % 1 == 1.0`` rounding case."""
    if np.ndim(x) == 0:
        r = float(x) % 1.0
        return 0.0 if r >= 1.0 else r
    r = np.mod(x, 1.0)
    r[r >= 1.0] = 0.0
    return r


def convergents(quotients: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    p = [0, 1]
    q = [1, quotients[0]] if quotients else [1]
    if not quotients:
        return (0,), (1,)
    for a in quotients[1:]:
        p.append(a * p[-1] + p[-2])
        q.append(a * q[-1] + q[-2])
    return tuple(p), tuple(q)


def cf_expand(alpha, depth: int, prec: int = DEFAULT_PREC, max_prec: int = MAX_PREC) -> Rotation:
    """Expand ``alpha`` in (0, 1) to ``depth`` certified partial quotients.

    ``alpha`` may be a named constant (``"golden"``, ``"sqrt2m1"``), an
    arithmetic expression string such as ``"(sqrt(21)-3)/2"``, an exact
    rational, a float (taken as the exact binary rational it is) or an
    enclosure ``(lo, hi)``. Expression inputs are re-evaluated at doubled
    precision until every quotient is certified or ``max_prec`` is hit.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    prec = max(int(prec), 128)
    while True:
        lo, hi, source, exact = _alpha_enclosure(alpha, prec)
        if not (0 < lo and hi < 1):
            raise ValueError(f"alpha must lie in (0, 1), got enclosure [{float(lo)}, {float(hi)}]")
        try:
            quotients, terminated = _expand_interval(lo, hi, depth)
        except PrecisionError:
            if isinstance(alpha, str) and not exact and prec < max_prec:
                prec *= 2
                continue
            raise
        p, q = convergents(quotients)
        return Rotation(lo, hi, tuple(quotients), p, q, source=source, prec=prec,
                        terminated=terminated, exact_input=exact)


def bounded_type_constant(rot: Rotation) -> int:
    """``max(a_1..a_K) + 1``: a lower bound for ``sup a_n + 1`` from depth K."""
    return max(rot.partial_quotients) + 1


def dist_to_int(t):
    """Distance to the nearest integer, ``||t||``."""
    if isinstance(t, np.ndarray):
        return np.abs(t - np.rint(t))
    return abs(t - round(t))


# ---------------------------------------------------------------------------
# Ostrowski numeration
# ---------------------------------------------------------------------------

def ostrowski_digits(n: int, rot: Rotation) -> list[int]:
    """Greedy digits ``b_0..b_{K-1}`` with ``n = sum b_j q_j``."""
    n = int(n)
    if n < 0 or n >= rot.q[-1]:
        raise OutOfRangeError(f"need 0 <= n < q_K = {rot.q[-1]}, got {n}")
    digits = [0] * rot.depth
    for j in range(rot.depth - 1, -1, -1):
        b, n = divmod(n, rot.q[j])
        digits[j] = b
    return digits


def ostrowski_is_legal(digits: Sequence[int], rot: Rotation) -> bool:
    a = rot.partial_quotients
    if digits and digits[0] > a[0] - 1:
        return False
    for j in range(1, len(digits)):
        if digits[j] > a[j]:
            return False
        if digits[j] == a[j] and digits[j - 1] != 0:
            return False
    return True


# ---------------------------------------------------------------------------
# convergent inequalities
# ---------------------------------------------------------------------------

def check_denominator_bounds(rot: Rotation) -> list[dict]:
    """Exact check of ``1/(2 q_n q_{n+1}) < |alpha - p_n/q_n| < 1/(q_n q_{n+1})``.

    Uses the rational enclosure of alpha, so a ``True`` is a proof for
    every n < depth. Also checks ``1/(2 q_{n+1}) < ||q_n alpha|| < 1/q_{n+1}``.
    """
    rows = []
    for n in range(rot.depth):
        pn, qn, qn1 = rot.p[n], rot.q[n], rot.q[n + 1]
        conv = Fraction(pn, qn)
        d_lo = min(abs(rot.alpha_lo - conv), abs(rot.alpha_hi - conv))
        d_hi = max(abs(rot.alpha_lo - conv), abs(rot.alpha_hi - conv))
        straddles = rot.alpha_lo <= conv <= rot.alpha_hi
        lower = Fraction(1, 2 * qn * qn1)
        upper = Fraction(1, qn * qn1)
        # ||q_n alpha|| = q_n |alpha - p_n/q_n| while that is below 1/2
        norm_lo, norm_hi = qn * d_lo, qn * d_hi
        rows.append({
            "n": n,
            "q_n": qn,
            "recurrence": qn1 == rot.partial_quotients[n] * qn + (rot.q[n - 1] if n else 0),
            "coprime": math.gcd(pn, qn) == 1,
            "lower": (not straddles) and d_lo > lower,
            "upper": d_hi < upper,
            "norm_bounds": (not straddles) and Fraction(1, 2 * qn1) < norm_lo and norm_hi < Fraction(1, qn1),
        })
    return rows


# ---------------------------------------------------------------------------
# exact orbit counting through convergent floor sums
# ---------------------------------------------------------------------------

def floor_sum(n: int, m: int, a: int, b: int) -> int:
    """``sum_{i<n} floor((a*i + b)/m)`` in O(log m) steps (n >= 0, m >= 1)."""
    ans = 0
    while True:
        qa, a = divmod(a, m)
        ans += qa * (n * (n - 1) // 2)
        qb, b = divmod(b, m)
        ans += qb * n
        y_max = a * n + b
        if y_max < m:
            return ans
        n, b = divmod(y_max, m)
        m, a = a, m


def surrogate_index(rot: Rotation, n: int) -> int:
    """Smallest K' with ``q_{K'} >= 2n``; the window for an n-term sum."""
    need = 2 * max(int(n), 1)
    for k, qk in enumerate(rot.q):
        if qk >= need and k >= 1:
            return k
    raise WindowExceededError(
        f"{n}-term orbit sum needs q_K >= {need}; depth {rot.depth} gives q_K = {rot.q[-1]}")


def _floor_shift_sign(rot: Rotation, v: Fraction, j: int, m: int) -> int:
    """Sign of ``v + j*alpha - m`` from the rational enclosure of alpha."""
    lo = v + j * rot.alpha_lo - m
    hi = v + j * rot.alpha_hi - m
    if lo > 0:
        return 1
    if hi < 0:
        return -1
    if lo == hi == 0:
        return 0
    raise PrecisionError("orbit point too close to an integer for the alpha enclosure")


def orbit_floor_sum(rot: Rotation, v: Fraction, n: int) -> int:
    """Exact ``sum_{0<=j<n} floor(v + j*alpha)`` for rational ``v``.

    The sum is computed for the convergent ``p/q`` (``q >= 2n``) with a
    floor-sum recursion; the only term where ``floor(v + j p/q)`` can differ
    from ``floor(v + j alpha)`` sits in a single residue class mod q, and is
    settled exactly against the enclosure of alpha.
    """
    n = int(n)
    if n <= 0:
        return 0
    k = surrogate_index(rot, n)
    p, q = rot.p[k], rot.q[k]
    num, den = v.numerator, v.denominator
    B = (num * q) // den
    total = floor_sum(n, q, p, B)
    if rot.alpha_lo <= Fraction(p, q) <= rot.alpha_hi:
        raise PrecisionError("alpha enclosure contains a convergent")
    above = rot.alpha_lo > Fraction(p, q)
    inv = pow(p, -1, q)
    if above:
        j0 = ((q - 1 - B) * inv) % q
        if 1 <= j0 < n:
            m = (j0 * p + B + 1) // q
            if _floor_shift_sign(rot, v, j0, m) >= 0:
                total += 1
    else:
        j0 = ((-B) * inv) % q
        if 1 <= j0 < n:
            m = (j0 * p + B) // q
            if _floor_shift_sign(rot, v, j0, m) < 0:
                total -= 1
    return total


def count_orbit_in_arc(rot: Rotation, z: Fraction, n: int, a: Fraction, b: Fraction) -> int:
    """``#{0 <= j < n : {z + j*alpha} in [a, b)}`` for ``0 <= a <= b <= 1``."""
    if not (0 <= a <= b <= 1):
        raise ValueError("need 0 <= a <= b <= 1")
    if a == b or n <= 0:
        return 0
    return orbit_floor_sum(rot, z + 1 - a, n) - orbit_floor_sum(rot, z + 1 - b, n)


def fraction_of(x) -> Fraction:
    """Exact rational value of a float/int/Fraction."""
    return x if isinstance(x, Fraction) else Fraction(x)
