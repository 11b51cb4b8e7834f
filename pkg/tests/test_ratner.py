import math

import pytest
from hypothesis import given, settings, strategies as st

from specflow.arithmetic import cf_expand
from specflow.errors import (DegeneratePairError, NoAdmissiblePError, OutOfDeltaError,
                             SameOrbitError, ZeroJumpSumError)
from specflow.ratner import (base_witness, build_config, choose_p, flow_witness, jump_sumset,
                             ratner_scan, same_orbit, sample_pairs)
from specflow.roof import load_roof, roof_from_parts

GOLDEN = cf_expand("golden", 40)
CANON = load_roof("canonical")
CFG = build_config(GOLDEN, CANON, 0.1, 10)


class TestConstants:
    def test_sumset(self):
        assert jump_sumset((1.0,), 2) == (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
        assert jump_sumset((0.5, 1.0), 1) == (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5)

    def test_choose_p(self):
        assert choose_p((0.0, 1.0, 2.0), 1.0) == 0.5
        assert choose_p((0.0, 0.25), 1.0) == pytest.approx(0.625)
        with pytest.raises(NoAdmissiblePError):
            choose_p(tuple(i / 1e14 for i in range(3)), 2e-14)

    def test_canonical_golden(self):
        # C = 2, k = 1, p = 1/2: kappa = min(0.1/2, 1/4)/5, delta = p/(|S| q_{s0+1})
        assert CFG.C == 2 and CFG.k == 1
        assert CFG.D == (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
        assert CFG.p == 0.5
        assert CFG.kappa == pytest.approx(0.01, rel=1e-15)
        assert GOLDEN.q[CFG.s0] * CFG.kappa > 10 >= GOLDEN.q[CFG.s0 - 1] * CFG.kappa
        assert CFG.delta == pytest.approx(0.5 / GOLDEN.q[CFG.s0 + 1], rel=1e-15)
        assert CFG.delta == pytest.approx(1.9349e-4, rel=1e-4)

    def test_flow_scale_lift(self):
        cfg = build_config(GOLDEN, CANON, 0.1, 10, lift="scaled")
        eps1 = min(1.0 * 0.1 / (8 * (1.0 + 2.0)), 0.1 / 16)
        assert cfg.eps_base == pytest.approx(eps1)
        assert cfg.N == 20
        assert cfg.kappa == pytest.approx(min(eps1 / 2, 0.25) / 5)

    def test_zero_jump_sum(self):
        with pytest.raises(ZeroJumpSumError):
            build_config(GOLDEN, roof_from_parts([0.1, 0.6], [1.0, -1.0], 2.0), 0.1, 10)

    def test_shifts_symmetric(self):
        sh = CFG.shifts()
        assert sorted(-v for v in sh) == list(sh)


class TestSameOrbit:
    def test_detects_orbit_partner(self):
        x = 0.3
        y = GOLDEN.rotate(x, 777)
        assert same_orbit(GOLDEN, x, y, 10 ** 6)

    def test_generic_pair(self):
        assert not same_orbit(GOLDEN, 0.3, 0.3 + 1e-5, 10 ** 6)

    def test_rejected_by_witness(self):
        x = 0.3
        y = GOLDEN.rotate(x, 6765)  # ||6765 alpha|| is well below delta
        with pytest.raises(SameOrbitError):
            base_witness(CFG, x, y)


class TestWitness:
    def test_out_of_delta(self):
        with pytest.raises(OutOfDeltaError):
            base_witness(CFG, 0.1, 0.2)

    def test_degenerate(self):
        with pytest.raises(DegeneratePairError):
            base_witness(CFG, 0.4, 0.4)

    @given(st.floats(0, 1, exclude_max=True), st.floats(1e-3, 0.999), st.booleans())
    @settings(max_examples=30, deadline=None)
    def test_base_witness_properties(self, x, frac, forward):
        ell = frac * CFG.delta
        y = (x + ell) % 1 if forward else (x - ell) % 1
        w = base_witness(CFG, x, y)
        assert w.success, w.reason
        assert w.q_s <= w.M_prime and w.M_prime + w.L_prime <= w.q_s1
        assert w.ratio >= CFG.kappa
        assert w.d_constant and w.d_in_D
        assert w.max_error < CFG.eps_base
        # shift p - d up to the orientation of the pair
        assert abs(w.shift) == pytest.approx(abs(CFG.p - w.d))
        assert w.step_residual < 1e-9

    def test_flow_witness_hits(self):
        (p1, p2), = sample_pairs(CFG, 1, seed=11)
        w = flow_witness(CFG, p1, p2)
        assert w.flow_success, w.reason
        assert w.hit_fraction > 0.9


class TestScan:
    def test_small_scan(self):
        rep = ratner_scan(CFG, 25, seed=5)
        assert rep["success_rate"] == 1.0
        assert rep["empirical_max_kappa"] >= CFG.kappa
        assert set(rep["d_distribution"]) <= {repr(float(d)) for d in CFG.D}

    def test_threads_match_serial(self):
        a = ratner_scan(CFG, 12, seed=9, threads=1)
        b = ratner_scan(CFG, 12, seed=9, threads=2)
        assert a == b

    def test_pairs_are_admissible(self):
        for p1, p2 in sample_pairs(CFG, 50, seed=2):
            assert abs(p1.x - p2.x) % 1 > 0
            assert math.fsum([min((p1.x - p2.x) % 1, (p2.x - p1.x) % 1), abs(p1.s - p2.s)]) < CFG.delta
