import numpy as np
import pytest

from sctc import sim
from sctc.codec import BlockResult
from sctc.construction import CouplingConfig
from sctc.errors import ConfigError
from sctc.sim import (BERPoint, BlockCode, ChainCode, DecodingError, StopRule, bec_transmit,
                      run_ber_sweep, run_point, write_ber_csv)


class TestChannel:
    def test_identity_at_zero(self, rng):
        bits = rng.integers(0, 2, 100, dtype=np.int8)
        np.testing.assert_array_equal(bec_transmit(bits, 0.0, 1), bits)

    def test_all_erased_at_one(self):
        assert np.all(bec_transmit(np.zeros(50, np.int8), 1.0, 1) == -1)

    def test_erasure_fraction(self):
        n = 10**6
        frac = np.mean(bec_transmit(np.zeros(n, np.int8), 0.5, 3) == -1)
        assert abs(frac - 0.5) < 3 * np.sqrt(0.25 / n)

    def test_deterministic(self):
        a = bec_transmit(np.ones(1000, np.int8), 0.3, 42)
        np.testing.assert_array_equal(a, bec_transmit(np.ones(1000, np.int8), 0.3, 42))

    def test_rejects_bad_probability(self):
        with pytest.raises(ConfigError):
            bec_transmit(np.zeros(3, np.int8), 1.5, 0)


class TestStatistics:
    def test_zero_errors_reports_rule_of_three(self):
        p = BERPoint.from_counts(0.1, 10, 1000, 0)
        assert p.ber == 0.0 and p.upper == pytest.approx(3e-3)

    def test_normal_half_width(self):
        p = BERPoint.from_counts(0.1, 10, 10_000, 100)
        assert p.half_width == pytest.approx(1.96 * np.sqrt(0.01 * 0.99 / 10_000))

    def test_stop_rule(self):
        rule = StopRule(100, 50)
        assert rule.done(3, 100) and rule.done(50, 0) and not rule.done(49, 99)


class TestSweeps:
    def test_well_below_threshold_has_no_errors(self):
        code = BlockCode(32, seed=1)
        p, _ = run_point(code, 0.05, StopRule(100, 20))
        assert p.error_bits == 0 and p.trials == 20 and p.upper > 0

    def test_stops_after_enough_errors(self):
        code = BlockCode(32, seed=1)
        p, results = run_point(code, 0.9, StopRule(100, 1000))
        assert p.error_bits >= 100 and p.trials < 1000
        assert sum(r.bit_errors for r in results[:-1]) < 100

    def test_parallel_matches_serial(self):
        code = ChainCode(CouplingConfig(K=16, L=4, seed=1))
        a, ra = run_point(code, 0.6, StopRule(30, 40), seed_base=5, workers=1)
        b, rb = run_point(code, 0.6, StopRule(30, 40), seed_base=5, workers=2)
        assert a == b
        assert [r.bit_errors for r in ra] == [r.bit_errors for r in rb]

    def test_csv_is_reproducible(self, tmp_path):
        code = BlockCode(24, seed=3)
        for name in ("a.csv", "b.csv"):
            pts = run_ber_sweep(code, [0.4, 0.6], StopRule(20, 15), seed_base=9)
            write_ber_csv(tmp_path / name, pts, {"config_hash": "x"})
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_common_random_numbers_nest_erasures(self):
        code = BlockCode(24, seed=3)
        lo = [code.trial(0.3, s).bit_errors for s in range(20)]
        hi = [code.trial(0.5, s).bit_errors for s in range(20)]
        assert all(a <= b for a, b in zip(lo, hi))

    def test_wrong_bit_aborts(self, monkeypatch):
        code = BlockCode(8, seed=0)

        def liar(obs, perm, outer, inner=None, max_iters=0):
            return BlockResult(np.ones(8, np.int8), True, 1)

        monkeypatch.setattr(sim, "decode_scc_block", liar)
        with pytest.raises(DecodingError):
            for s in range(10):
                code.trial(0.0, s)
