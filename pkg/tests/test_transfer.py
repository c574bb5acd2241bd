import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sctc.trellis import build_trellis
from sctc.transfer import (TransferFunction, binomial_se, exact_extrinsic, mc_extrinsic,
                           power_stationary, subset_chain)


def accumulator_oracle(a, b):
    """Closed-form extrinsic erasure rates of the two-state accumulator.

    F and B are the stationary probabilities that the state is unknown from
    the past and from the future; ``a``/``b`` are the prior erasure
    probabilities of the systematic and parity observations.
    """
    F = a * b / (1 - b * (1 - a))
    B = a / (1 - (1 - a) * b)
    return 1 - (1 - F) * (1 - b * B), (1 - (1 - F) * (1 - a)) * B


class TestAccumulatorOracle:
    @pytest.mark.parametrize("a,b", [(0.5, 0.5), (0.1, 0.9), (0.8, 0.3), (0.3, 0.05), (0.95, 0.95)])
    def test_fast_path(self, acc, a, b):
        got = TransferFunction(acc)(np.array([a]), np.array([b]))
        np.testing.assert_allclose([got[0][0], got[1][0]], accumulator_oracle(a, b), atol=1e-12)

    @pytest.mark.parametrize("a,b", [(0.5, 0.5), (0.2, 0.7)])
    def test_power_path(self, acc, a, b):
        np.testing.assert_allclose(exact_extrinsic(acc, a, b), accumulator_oracle(a, b), atol=1e-10)


class TestRSC57:
    def test_subset_chain_sizes(self, rsc57):
        assert subset_chain(rsc57, "forward").size == 5
        assert subset_chain(rsc57, "backward").size == 5

    def test_boundaries(self, rsc57):
        tf = TransferFunction(rsc57)
        s, p = tf(np.array([0.0, 1.0, 0.0, 1.0]), np.array([0.0, 1.0, 1.0, 0.0]))
        np.testing.assert_allclose(s[:2], [0.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(p[:2], [0.0, 1.0], atol=1e-12)
        # Known inputs but no parity: from an unknown start the state is never
        # pinned down, so nothing is learned about either stream.
        assert (s[2], p[2]) == pytest.approx((1.0, 1.0), abs=1e-12)
        # Parity alone: 1 + D^2 = (1 + D)^2 leaves a two-fold ambiguity forever.
        assert (s[3], p[3]) == pytest.approx((1.0, 1.0), abs=1e-12)

    def test_accumulator_corner_matches_closed_form(self, acc):
        s, p = TransferFunction(acc)(np.array([1.0]), np.array([0.0]))
        assert (s[0], p[0]) == pytest.approx((0.0, 1.0), abs=1e-12)

    def test_fast_and_reference_paths_agree(self, rsc57, rng):
        tf = TransferFunction(rsc57)
        ps, pp = rng.random(20), rng.random(20)
        s, p = tf(ps, pp)
        for k in range(20):
            np.testing.assert_allclose((s[k], p[k]), exact_extrinsic(rsc57, ps[k], pp[k]), atol=1e-9)

    def test_evaluate_is_scalar_and_cached(self, rsc57):
        tf = TransferFunction(rsc57)
        a = tf.evaluate(0.5, 0.5)
        assert a == tf.evaluate(0.5, 0.5)
        assert a == pytest.approx((0.511834, 0.488166), abs=1e-6)

    def test_broadcasting(self, rsc57):
        tf = TransferFunction(rsc57)
        s, p = tf(np.full((2, 3), 0.4), 0.6)
        assert s.shape == p.shape == (2, 3)

    def test_rejects_out_of_range(self, rsc57):
        with pytest.raises(ValueError):
            TransferFunction(rsc57)(np.array([1.2]), np.array([0.5]))

    def test_monte_carlo_within_three_sigma(self, rsc57):
        es, ep, (ss, sp) = mc_extrinsic(rsc57, 0.4, 0.6, 200_000, seed=7)
        xs, xp = exact_extrinsic(rsc57, 0.4, 0.6)
        assert abs(es - xs) < 3 * ss
        assert abs(ep - xp) < 3 * sp

    def test_mc_requires_enough_steps(self, rsc57):
        with pytest.raises(ValueError):
            mc_extrinsic(rsc57, 0.5, 0.5, 100, seed=0)


class TestMonotonicity:
    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.0, 0.3))
    def test_more_erasures_never_help(self, a, b, d):
        tf = TransferFunction(build_trellis("1,5/7"))
        s0, p0 = tf(np.array([a]), np.array([b]))
        s1, p1 = tf(np.array([min(1.0, a + d)]), np.array([min(1.0, b + d)]))
        assert s1[0] >= s0[0] - 1e-12
        assert p1[0] >= p0[0] - 1e-12

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_values_are_probabilities(self, a, b):
        tf = TransferFunction(build_trellis("1,5/7"))
        s, p = tf(np.array([a]), np.array([b]))
        assert -1e-12 <= s[0] <= 1 + 1e-12
        assert -1e-12 <= p[0] <= 1 + 1e-12


def test_power_stationary_two_state():
    P = np.array([[0.9, 0.1], [0.5, 0.5]])
    pi = power_stationary(P)[0]
    np.testing.assert_allclose(pi, [5 / 6, 1 / 6], atol=1e-10)


def test_binomial_se():
    assert binomial_se(0.5, 10_000) == pytest.approx(0.005)
