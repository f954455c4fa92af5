# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import numpy as np
import pytest

from dexc import actions
from dexc import config

Q_REF = np.array([0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.2, 0.3])


@pytest.fixture
def cfg() -> config.ActionConfig:
    return config.ActionConfig()


class TestComposeTargets:
    @staticmethod
    def test_zero_action(hand, cfg):
        targets = actions.compose_targets(np.zeros(8), Q_REF, hand, cfg)
        np.testing.assert_allclose(targets[:6], Q_REF[:6])
        np.testing.assert_allclose(targets[6:], [0.6, 0.6])

    @staticmethod
    def test_full_action(hand, cfg):
        targets = actions.compose_targets(np.ones(8), Q_REF, hand, cfg)
        np.testing.assert_allclose(targets[:3], Q_REF[:3] + 0.02)
        np.testing.assert_allclose(targets[3:6], Q_REF[3:6] + 0.1)
        np.testing.assert_allclose(targets[6:], hand.upper[6:])

    @staticmethod
    def test_actions_clipped(hand, cfg):
        np.testing.assert_array_equal(
            actions.compose_targets(np.full(8, 3.0), Q_REF, hand, cfg),
            actions.compose_targets(np.ones(8), Q_REF, hand, cfg),
        )

    @staticmethod
    def test_clamped_to_limits(hand, cfg):
        q_ref = Q_REF.copy()
        q_ref[2] = hand.upper[2]
        targets = actions.compose_targets(np.ones(8), q_ref, hand, cfg)
        assert targets[2] == hand.upper[2]

    @staticmethod
    def test_batched(hand, cfg):
        a = np.random.default_rng(0).uniform(-1, 1, size=(5, 2, 8))
        q_ref = np.broadcast_to(Q_REF, (5, 2, 8))
        targets = actions.compose_targets(a, q_ref, hand, cfg)
        assert targets.shape == (5, 2, 8)
        np.testing.assert_allclose(
            targets[3, 1], actions.compose_targets(a[3, 1], Q_REF, hand, cfg)
        )

    @staticmethod
    def test_scales(hand):
        cfg = config.ActionConfig(s_t=0.5, s_r=0.25)
        a = np.array([0.5, 0, 0, -1.0, 0, 0, 0, 0])
        targets = actions.compose_targets(a, Q_REF, hand, cfg)
        assert targets[0] == pytest.approx(Q_REF[0] + 0.25)
        assert targets[3] == pytest.approx(Q_REF[3] - 0.25)

    @staticmethod
    def test_wrong_size(hand, cfg):
        with pytest.raises(actions.ActionError, match="expected 8 joint values, got 7"):
            actions.compose_targets(np.zeros(7), Q_REF[:7], hand, cfg)


class TestAbsoluteTargets:
    @staticmethod
    @pytest.mark.parametrize("value, attr", [(-1.0, "lower"), (1.0, "upper")])
    def test_endpoints(hand, value, attr):
        targets = actions.absolute_targets(np.full(8, value), hand)
        np.testing.assert_allclose(targets, getattr(hand, attr))

    @staticmethod
    def test_midpoint(hand):
        targets = actions.absolute_targets(np.zeros(8), hand)
        np.testing.assert_allclose(targets, (hand.lower + hand.upper) / 2.0)


class TestFullResidual:
    @staticmethod
    def test_wrist_half_ranges():
        joints = np.zeros((2, 3, 8))
        joints[0, :, 0] = [0.0, 0.4, 0.2]
        joints[1, :, 5] = [-1.0, 1.0, 0.0]
        half = actions.wrist_half_ranges(joints)
        assert half.shape == (2, 6)
        assert half[0, 0] == pytest.approx(0.2)
        assert half[1, 5] == pytest.approx(1.0)
        assert half[0, 1] == 0.0

    @staticmethod
    def test_targets(hand):
        half = np.full(6, 0.3)
        targets = actions.full_residual_targets(np.ones(8), Q_REF, hand, half)
        np.testing.assert_allclose(
            targets[:6], np.minimum(Q_REF[:6] + 0.3, hand.upper[:6])
        )
        np.testing.assert_allclose(targets[6:], hand.upper[6:])

    @staticmethod
    def test_needs_ranges(hand):
        with pytest.raises(actions.ActionError, match="need the clip wrist range"):
            actions.full_residual_targets(np.ones(8), Q_REF, hand, None)


class TestActionMap:
    @staticmethod
    @pytest.mark.parametrize("mode", ["hybrid", "absolute", "full-residual"])
    def test_modes(hand, mode):
        cfg = config.ActionConfig(mode=mode)
        action_map = actions.ActionMap(hand, cfg, half_ranges=np.full(6, 0.1))
        a = np.linspace(-1, 1, 8)
        expected = {
            "hybrid": lambda: actions.compose_targets(a, Q_REF, hand, cfg),
            "absolute": lambda: actions.absolute_targets(a, hand),
            "full-residual": lambda: actions.full_residual_targets(
                a, Q_REF, hand, np.full(6, 0.1)
            ),
        }[mode]()
        np.testing.assert_array_equal(action_map.targets(a, Q_REF), expected)

    @staticmethod
    def test_unknown_mode(hand):
        action_map = actions.ActionMap(hand, config.ActionConfig(mode="joystick"))
        with pytest.raises(actions.ActionError, match="unknown action mode: joystick"):
            action_map.targets(np.zeros(8), Q_REF)


DRAWS = 10_000


def random_reference(hand, rng, size):
    return rng.uniform(hand.lower, hand.upper, size=(size, len(hand.lower)))


class TestProperties:
    @staticmethod
    @pytest.mark.parametrize("mode", ["hybrid", "absolute", "full-residual"])
    def test_within_limits(hand, mode):
        rng = np.random.default_rng(11)
        action_map = actions.ActionMap(
            hand, config.ActionConfig(mode=mode), half_ranges=np.full(6, 0.5)
        )
        a = rng.uniform(-3.0, 3.0, size=(DRAWS, 8))
        targets = action_map.targets(a, random_reference(hand, rng, DRAWS))
        assert np.all(targets >= hand.lower)
        assert np.all(targets <= hand.upper)

    @staticmethod
    @pytest.mark.parametrize("s_t, s_r", [(0.02, 0.1), (0.5, 0.25), (2.0, 7.0)])
    def test_lipschitz_in_actions(hand, s_t, s_r):
        rng = np.random.default_rng(12)
        cfg = config.ActionConfig(s_t=s_t, s_r=s_r)
        q_ref = random_reference(hand, rng, DRAWS)
        first = rng.uniform(-1.5, 1.5, size=(DRAWS, 8))
        second = rng.uniform(-1.5, 1.5, size=(DRAWS, 8))
        change = np.abs(
            actions.compose_targets(first, q_ref, hand, cfg)
            - actions.compose_targets(second, q_ref, hand, cfg)
        )
        constant = np.concatenate(
            [np.full(3, s_t), np.full(3, s_r), (hand.upper[6:] - hand.lower[6:]) / 2]
        )
        assert np.all(change <= constant * np.abs(first - second) + 1e-12)
        assert np.all(change <= constant.max() * np.abs(first - second) + 1e-12)

