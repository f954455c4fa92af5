# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import numpy as np
import pytest

from dexc import actions
from dexc import config
from dexc import env
from dexc import prep
from dexc import sim

N_ENVS = 3
LOOSE = env.Thresholds(pos=10.0, rot=10.0)


@pytest.fixture
def gains(obj) -> sim.VirtualGains:
    return sim.VirtualGains.critical(3e4, obj.total_mass)


def make_env(reference, simulator, thresholds=LOOSE, **kwargs):
    return env.TrackingEnv(
        reference=reference,
        simulator=simulator,
        action_map=actions.ActionMap(simulator.hand, config.ActionConfig()),
        reward_cfg=config.RewardConfig(),
        thresholds=thresholds,
        n_envs=N_ENVS,
        rng=np.random.default_rng(0),
        **kwargs,
    )


def test_observation_dim():
    assert env.observation_dim(8, 4, 2) == 81


class TestReference:
    @staticmethod
    def test_l_max(reference, clip):
        assert reference.l_max == clip.frames - 1
        assert reference.contacts.shape == (2, clip.frames, 2, 4, 3)

    @staticmethod
    def test_frame_mismatch(clip, empty_annotations):
        retarget = prep.Retarget(
            joints=clip.hand_joints[:, :-1],
            keypoints=clip.hand_keypoints[:, :-1],
            max_penetration=0.0,
        )
        with pytest.raises(prep.PrepError, match="retarget frames do not match"):
            env.Reference.build(clip, retarget, empty_annotations)


class TestReset:
    @staticmethod
    def test_observation(reference, simulator, clip):
        tracking = make_env(reference, simulator)
        obs = tracking.reset()
        assert obs.shape == (N_ENVS, 81)
        assert tracking.obs_dim == 81
        assert tracking.act_dim == 16
        first, second = clip.object_targets[0], clip.object_targets[1]
        np.testing.assert_allclose(obs[:, :8], np.tile(first, (N_ENVS, 1)))
        np.testing.assert_allclose(obs[:, 8:16], np.tile(first, (N_ENVS, 1)))
        np.testing.assert_allclose(obs[:, 16:24], np.tile(second, (N_ENVS, 1)))
        np.testing.assert_array_equal(obs[:, -1], 0.0)

    @staticmethod
    def test_hands_start_on_reference(reference, simulator, clip):
        tracking = make_env(reference, simulator)
        tracking.reset()
        for index in range(N_ENVS):
            np.testing.assert_allclose(
                tracking.state.hand_q[index], clip.hand_joints[:, 0]
            )

    @staticmethod
    def test_reset_noise(reference, simulator, clip):
        tracking = make_env(reference, simulator, reset_noise=0.01)
        tracking.reset()
        assert not np.allclose(tracking.state.hand_q[0], clip.hand_joints[:, 0])


class TestStep:
    @staticmethod
    def test_shapes(reference, simulator, gains):
        tracking = make_env(reference, simulator)
        tracking.reset()
        result = tracking.step(np.zeros((N_ENVS, 16)), gains)
        assert result.obs.shape == (N_ENVS, 81)
        assert result.breakdown.r_total.shape == (N_ENVS,)
        assert result.done.shape == (N_ENVS,)
        assert result.achieved.shape == (N_ENVS, 8)
        assert not result.done.any()
        assert result.episodes == []
        np.testing.assert_array_equal(tracking.frame, 1)
        assert np.all(result.breakdown.r_total >= 0.0)
        assert np.all(result.breakdown.r_total <= 1.25)

    @staticmethod
    def test_action_shape(reference, simulator, gains):
        tracking = make_env(reference, simulator)
        tracking.reset()
        with pytest.raises(actions.ActionError, match=r"shape \(3, 16\)"):
            tracking.step(np.zeros((N_ENVS, 8)), gains)

    @staticmethod
    def test_full_episode_resets(reference, simulator, gains):
        tracking = make_env(reference, simulator, replay_reference=True)
        tracking.reset()
        total = 0.0
        for _ in range(reference.l_max - 1):
            result = tracking.step(None, gains)
            assert result.episodes == []
            total += result.breakdown.r_total[0]
        result = tracking.step(None, gains)
        total += result.breakdown.r_total[0]
        assert result.done.all()
        assert not result.terminated.any()
        assert [e.length for e in result.episodes] == [reference.l_max] * N_ENVS
        assert result.episodes[0].total == pytest.approx(total)
        np.testing.assert_array_equal(tracking.frame, 0)
        np.testing.assert_array_equal(tracking.returns, 0.0)

    @staticmethod
    def test_termination(reference, simulator, gains):
        thresholds = env.Thresholds(pos=-1.0, rot=10.0)
        tracking = make_env(reference, simulator, thresholds=thresholds)
        tracking.reset()
        result = tracking.step(np.zeros((N_ENVS, 16)), gains)
        assert result.terminated.all()
        assert all(e.terminated and e.length == 1 for e in result.episodes)
        assert result.episodes[0].task == pytest.approx(result.breakdown.r_task[0])
        np.testing.assert_array_equal(tracking.frame, 0)

    @staticmethod
    def test_replay_ignores_actions(reference, simulator, gains):
        first = make_env(reference, simulator, replay_reference=True)
        second = make_env(reference, simulator, replay_reference=True)
        first.reset()
        second.reset()
        for _ in range(3):
            a = first.step(np.ones((N_ENVS, 16)), gains)
            b = second.step(-np.ones((N_ENVS, 16)), gains)
        np.testing.assert_array_equal(a.obs, b.obs)


def test_from_config(reference, simulator):
    cfg = config.RunConfig(
        train=config.TrainConfig(method="task-only", term_pos=0.2, term_rot=0.5)
    )
    tracking = env.from_config(cfg, reference, simulator, 2, np.random.default_rng(0))
    assert tracking.thresholds == env.Thresholds(pos=0.2, rot=0.5)
    assert tracking.reward_cfg == cfg.effective_rewards
    assert tracking.n_envs == 2
    assert not tracking.replay_reference
