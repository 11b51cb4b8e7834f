
import mpmath
import pytest
from hypothesis import assume, given, settings, strategies as st

from specflow.arithmetic import cf_expand
from specflow.cocycle import (ac_uniform_smallness, birkhoff, birkhoff_fast, birkhoff_naive,
                              birkhoff_partial_sums, birkhoff_pl_exact, jump_count,
                              jump_count_brute, max_overlap, pl_difference)
from specflow.errors import DegeneratePairError, WindowExceededError
from specflow.roof import bump, load_roof, roof_from_parts, trig

GOLDEN = cf_expand("golden", 40)
SILVER = cf_expand("sqrt2m1", 40)
CANON = load_roof("canonical")
def clear_of_breaks(*pts, gap=1e-9):
    """The float brute-force counter cannot resolve points within ``gap`` of a breakpoint."""
    return all(min((p - b) % 1, (b - p) % 1) > gap for p in pts for b in MIXED.breakpoints)


MIXED = roof_from_parts([0.0, 0.37], [1.0, -0.4], 1.6, [trig(0.08, 2, 0.4), bump(0.6, 0.8, 0.05)])


def mp_birkhoff(n, x):
    """Canonical-roof Birkhoff sum at 60 digits, independent of the package."""
    mpmath.mp.dps = 60
    alpha = (mpmath.sqrt(5) - 1) / 2
    total = mpmath.mpf(0)
    js = range(n) if n > 0 else range(n, 0)
    for j in js:
        total += 1 + mpmath.frac(mpmath.mpf(x) + j * alpha)
    mpmath.mp.dps = 15
    return float(total if n > 0 else -total)


class TestNaive:
    @pytest.mark.parametrize("n, x", [(1, 0.0), (2, 0.0), (5, 0.3), (-1, 0.0), (-4, 0.7), (50, 0.123)])
    def test_high_precision_oracle(self, n, x):
        assert birkhoff_naive(GOLDEN, CANON, n, x) == pytest.approx(mp_birkhoff(n, x), abs=1e-12)

    def test_small_values(self):
        g = GOLDEN.alpha
        assert birkhoff_naive(GOLDEN, CANON, 0, 0.4) == 0.0
        assert birkhoff_naive(GOLDEN, CANON, 2, 0.0) == pytest.approx(2 + g)
        assert birkhoff_naive(GOLDEN, CANON, -1, g) == pytest.approx(-1.0)

    def test_constant_roof_counts_steps(self):
        f = load_roof("constant")
        assert birkhoff_naive(GOLDEN, f, 1234, 0.5) == 1234.0

    def test_partial_sums(self):
        sums = birkhoff_partial_sums(GOLDEN, CANON, 0.2, 30)
        assert sums[0] == 0.0
        assert sums[17] == pytest.approx(birkhoff_naive(GOLDEN, CANON, 17, 0.2), abs=1e-12)


class TestCocycle:
    @given(st.integers(-1000, 1000), st.integers(-1000, 1000), st.floats(0, 1, exclude_max=True),
           st.sampled_from([GOLDEN, SILVER]))
    @settings(max_examples=150, deadline=None)
    def test_identity(self, m, n, x, rot):
        lhs = birkhoff_naive(rot, CANON, m + n, x)
        rhs = birkhoff_naive(rot, CANON, m, x) + birkhoff_naive(rot, CANON, n, rot.rotate(x, m))
        assert abs(lhs - rhs) < 1e-9


class TestFast:
    @given(st.integers(-20_000, 20_000), st.floats(0, 1, exclude_max=True))
    @settings(max_examples=100, deadline=None)
    def test_pl_exact_matches_naive(self, n, x):
        a = birkhoff_naive(SILVER, CANON, n, x)
        b = birkhoff_pl_exact(SILVER, CANON, n, x)
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))

    @given(st.integers(-20_000, 20_000), st.floats(0, 1, exclude_max=True))
    @settings(max_examples=100, deadline=None)
    def test_mixed_roof(self, n, x):
        a = birkhoff_naive(GOLDEN, MIXED, n, x)
        b = birkhoff_fast(GOLDEN, MIXED, n, x)
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))

    def test_window_exceeded_and_fallback(self):
        shallow = cf_expand("golden", 10)
        with pytest.raises(WindowExceededError):
            birkhoff_fast(shallow, CANON, 1000, 0.1)
        assert birkhoff(shallow, CANON, 1000, 0.1) == pytest.approx(
            birkhoff_naive(shallow, CANON, 1000, 0.1))


class TestJumps:
    def test_worked_example(self):
        assert jump_count(GOLDEN, CANON, 3, 0.3, 0.4) == 1.0
        assert pl_difference(GOLDEN, CANON, 3, 0.3, 0.4) == pytest.approx(-0.7, abs=1e-12)

    @given(st.integers(0, 3000), st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
    @settings(max_examples=150, deadline=None)
    def test_exact_matches_brute(self, n, x, y):
        assume(clear_of_breaks(x, y) and min((x - y) % 1, (y - x) % 1) > 1e-9)
        assert jump_count(GOLDEN, MIXED, n, x, y) == pytest.approx(
            jump_count_brute(GOLDEN, MIXED, n, x, y), abs=1e-12)

    @given(st.integers(0, 3000), st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
    @settings(max_examples=150, deadline=None)
    def test_difference_identity(self, n, x, y):
        assume(x != y)
        f_pl, _ = MIXED.decompose()
        lhs = pl_difference(GOLDEN, f_pl, n, x, y)
        rhs = birkhoff_naive(GOLDEN, f_pl, n, y) - birkhoff_naive(GOLDEN, f_pl, n, x)
        assert abs(lhs - rhs) < 1e-9

    def test_degenerate_pair(self):
        with pytest.raises(DegeneratePairError):
            pl_difference(GOLDEN, CANON, 3, 0.25, 0.25)


class TestSmallness:
    def test_decreasing_in_scale(self):
        g = roof_from_parts([], [], 0.0, [trig(0.1, 1)])
        vals = [ac_uniform_smallness(GOLDEN, g, s, n_x=16, n_h=8) for s in range(4, 11)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_zero_for_empty(self):
        assert ac_uniform_smallness(GOLDEN, roof_from_parts([], [], 0.0), 5) == 0.0

    def test_overlap_bounded(self):
        # arcs of length 1/q_s over q_{s+1} steps overlap boundedly for bounded type
        s = 10
        assert max_overlap(GOLDEN, 0.3, 1 / GOLDEN.q[s], GOLDEN.q[s + 1]) <= 4
