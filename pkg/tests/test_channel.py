import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from probemac.channel import Channel, Position, ShadowState, path_loss, refresh_gains, shadow_correlation, step_shadowing


class TestPathLoss:
    @pytest.mark.parametrize(
        "d, expected",
        [(1.0, 1.0), (100.0, 10 ** -4.8), (0.5, 1.0), (0.0, 1.0)],
    )
    def test_values(self, d, expected):
        assert path_loss(d, 2.4) == pytest.approx(expected, rel=1e-12)

    def test_hundred_metres_numeric(self):
        assert path_loss(100.0, 2.4) == pytest.approx(1.5849e-5, rel=1e-4)

    @given(st.floats(0.0, 5000.0), st.floats(0.0, 5000.0), st.floats(0.5, 6.0))
    def test_monotone_and_bounded(self, a, b, beta):
        lo, hi = sorted((a, b))
        assert path_loss(hi, beta) <= path_loss(lo, beta) <= 1.0


class TestShadowing:
    def test_memoryless(self):
        assert step_shadowing(ShadowState(0.0, 0.0, 4.0), 1.0).value_db == pytest.approx(4.0)

    def test_near_perfect_correlation(self):
        out = step_shadowing(ShadowState(2.0, 1 - 1e-12, 4.0), 3.7)
        assert out.value_db == pytest.approx(2.0, abs=1e-4)

    def test_hand_value(self):
        out = step_shadowing(ShadowState(3.0, 0.9, 4.0), 0.5)
        assert out.value_db == pytest.approx(0.9 * 3 + math.sqrt(0.19) * 4 * 0.5)
        assert out.value_db == pytest.approx(3.5718, abs=1e-4)

    def test_rejects_bad_epsilon(self):
        with pytest.raises(ValueError):
            step_shadowing(ShadowState(0.0, 1.5, 4.0), 0.0)

    def test_correlation_from_speed(self):
        assert shadow_correlation(0.0, 0.02, 20.0) == 1.0
        assert shadow_correlation(10 / 3.6, 0.02, 20.0) == pytest.approx(math.exp(-10 / 3.6 * 0.02 / 20))


class TestRefreshGains:
    def test_two_nodes(self):
        g = refresh_gains([[0, 0], [100, 0]], np.zeros((2, 2)), 2.4)
        assert g[0, 1] == g[1, 0] == pytest.approx(1.5849e-5, rel=1e-4)
        assert g[0, 0] == 0.0

    def test_shadow_plus_ten_db(self):
        s = np.array([[0.0, 10.0], [10.0, 0.0]])
        g = refresh_gains([[0, 0], [100, 0]], s, 2.4)
        assert g[0, 1] == pytest.approx(10 * path_loss(100.0, 2.4))

    def test_position_distance(self):
        assert Position(0, 0).distance(Position(3, 4)) == 5.0


class TestChannel:
    def _channel(self, n=12, eps=0.9, seed=0, moving=None):
        rng = np.random.default_rng(seed)
        pos = rng.uniform(0, 1000, size=(n, 2))
        if moving is None:
            moving = np.arange(n) % 2 == 1
        return Channel(pos, moving, 2.4, 4.0, eps, rng), pos

    def test_symmetric_after_steps(self):
        ch, pos = self._channel()
        rng = np.random.default_rng(5)
        for _ in range(20):
            pos = pos + rng.normal(0, 1, size=pos.shape) * (np.arange(len(pos)) % 2 == 1)[:, None]
            ch.step(pos)
            assert np.array_equal(ch.gains, ch.gains.T)
            assert np.all(ch.gains[~np.eye(len(pos), dtype=bool)] > 0)

    def test_matches_reference_formula(self):
        ch, pos = self._channel()
        ch.step(pos)
        ref = refresh_gains(pos, ch.shadow_matrix(), 2.4)
        np.testing.assert_allclose(ch.gains, ref, rtol=1e-12)

    def test_static_pairs_frozen(self):
        ch, pos = self._channel()
        before = ch.shadow_state(0, 2).value_db
        moving_before = ch.shadow_state(0, 1).value_db
        ch.step(pos)
        assert ch.shadow_state(0, 2).value_db == before
        assert ch.shadow_state(0, 2).epsilon == 1.0
        assert ch.shadow_state(0, 1).value_db != moving_before

    def test_no_self_state(self):
        ch, _ = self._channel()
        with pytest.raises(ValueError):
            ch.shadow_state(3, 3)
