# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import dataclasses
from typing import NamedTuple
from typing import Optional

import numpy as np

from dexc import actions
from dexc import assets
from dexc import config
from dexc import demo
from dexc import prep
from dexc import rewards
from dexc import sim

"""
Vectorized demonstration-tracking environment.

At frame t the policy sees the targets of frames t and t+1, its action is
composed with the reference joints of frame t+1, and rewards compare the
resulting state with frame t+1. An episode therefore lasts at most T-1 steps.
Finished environments are reset to frame 0 immediately.
"""


@dataclasses.dataclass(frozen=True)
class EpisodeRecord:
    """Cumulative rewards of one finished episode."""

    length: int
    task: float
    imi: float
    bc: float
    con: float
    total: float
    terminated: bool

    def term(self, name: str) -> float:
        return getattr(self, name)


class StepResult(NamedTuple):
    obs: np.ndarray
    breakdown: rewards.RewardBreakdown
    done: np.ndarray
    terminated: np.ndarray
    episodes: list[EpisodeRecord]
    distances: tuple[np.ndarray, np.ndarray, np.ndarray]
    achieved: np.ndarray


def observation_dim(joint_count: int, link_count: int, part_count: int) -> int:
    """8 + 16 + 4J + 2K + 2NK + 1."""
    return 8 + 16 + 4 * joint_count + 2 * link_count + 2 * part_count * link_count + 1


@dataclasses.dataclass(frozen=True, eq=False)
class Reference:
    """Everything an environment tracks: the clip plus preprocessing output."""

    clip: demo.DemoClip
    joints: np.ndarray  # (2, T, J) replayed joints
    keypoints: np.ndarray  # (2, T, K, 3) replayed keypoints
    contacts: np.ndarray  # (2, T, N, K, 3)
    contact_mask: np.ndarray  # (2, T, N, K)

    @classmethod
    def build(
        cls,
        clip: demo.DemoClip,
        retarget: prep.Retarget,
        annotations: tuple[prep.ContactAnnotation, prep.ContactAnnotation],
    ) -> "Reference":
        if retarget.joints.shape[1] != clip.frames:
            raise prep.PrepError("retarget frames do not match the clip")
        if annotations[0].mask.shape[0] != clip.frames:
            raise prep.PrepError("contact frames do not match the clip")
        return cls(
            clip=clip,
            joints=retarget.joints,
            keypoints=retarget.keypoints,
            contacts=np.stack([a.contacts for a in annotations]),
            contact_mask=np.stack([a.mask for a in annotations]),
        )

    @property
    def l_max(self) -> int:
        return self.clip.frames - 1


@dataclasses.dataclass
class Thresholds:
    """Early termination tolerances; `finger` of None disables that check."""

    pos: float
    rot: float
    finger: Optional[float] = None


class TrackingEnv:
    """
    Batch of environments tracking one reference.

    :param replay_reference: Ignore actions and drive the hands with the
        replayed reference joints (the kinematics-only behaviour).
    """

    def __init__(
        self,
        reference: Reference,
        simulator: sim.Simulator,
        action_map: actions.ActionMap,
        reward_cfg: config.RewardConfig,
        thresholds: Thresholds,
        n_envs: int,
        rng: np.random.Generator,
        reset_noise: float = 0.0,
        replay_reference: bool = False,
    ):
        hand = simulator.hand
        if reference.clip.joint_count != hand.joint_count:
            raise actions.ActionError(
                f"clip has {reference.clip.joint_count} joints, "
                f"hand has {hand.joint_count}"
            )
        self.reference = reference
        self.simulator = simulator
        self.action_map = action_map
        self.reward_cfg = reward_cfg
        self.thresholds = thresholds
        self.n_envs = n_envs
        self.rng = rng
        self.reset_noise = reset_noise
        self.replay_reference = replay_reference
        self.obs_dim = observation_dim(
            hand.joint_count, hand.link_count, assets.PART_COUNT
        )
        self.act_dim = 2 * hand.joint_count
        self.state = simulator.make_state(
            np.zeros((n_envs, 3)),
            np.tile([1.0, 0.0, 0.0, 0.0], (n_envs, 1)),
            np.zeros(n_envs),
            np.zeros((n_envs, 2, hand.joint_count)),
        )
        self.frame = np.zeros(n_envs, dtype=np.int64)
        self.length = np.zeros(n_envs, dtype=np.int64)
        self.returns = np.zeros((n_envs, len(rewards.TERMS) + 1))
        self.joint_targets = np.zeros((n_envs, 2, hand.joint_count))

    @property
    def l_max(self) -> int:
        return self.reference.l_max

    def _initial_state(self, count: int) -> sim.SimState:
        state = self.simulator.reset(
            self.reference.clip, 0, hand_joints=self.reference.joints, n_envs=count
        )
        noise = self.rng.standard_normal(state.hand_q.shape) * self.reset_noise
        return state.replace(hand_q=self.simulator.hand.clamp(state.hand_q + noise))

    def reset(self) -> np.ndarray:
        """Reset every environment to frame 0 and return observations."""
        self.state = self._initial_state(self.n_envs)
        self.frame[:] = 0
        self.length[:] = 0
        self.returns[:] = 0.0
        self.joint_targets = self.state.hand_q.copy()
        return self.observe()

    def observe(self) -> np.ndarray:
        state = self.state
        clip = self.reference.clip
        current = clip.object_targets[self.frame]
        upcoming = clip.object_targets[np.minimum(self.frame + 1, clip.frames - 1)]
        scale = self.simulator.params.contact_force_scale
        forces = np.clip(state.contact_forces / scale, 0.0, 1.0)
        distances = self.simulator.finger_object_distances(state)
        n_envs = self.n_envs
        obs = np.concatenate(
            [
                state.object_rows(),
                current,
                upcoming,
                state.hand_q.reshape(n_envs, -1),
                self.joint_targets.reshape(n_envs, -1),
                distances.reshape(n_envs, -1),
                forces.reshape(n_envs, -1),
                (self.frame / clip.frames)[:, None],
            ],
            axis=1,
        )
        return obs

    def rewards_for(self, state: sim.SimState, frame: np.ndarray):
        """Reward breakdown and tracking distances of `state` against `frame`."""
        ref = self.reference
        target = ref.clip.object_targets[frame]
        achieved = state.object_rows()
        r_task, factors = rewards.task_reward(achieved, target, self.reward_cfg)
        keypoints = self.simulator.hand.keypoints(state.hand_q)
        ref_keypoints = np.swapaxes(ref.keypoints[:, frame], 0, 1)
        r_imi = rewards.imitation_reward(
            keypoints, ref_keypoints, self.reward_cfg.beta_imi
        ).mean(axis=1)
        ref_joints = np.swapaxes(ref.joints[:, frame], 0, 1)
        r_bc = rewards.bc_reward(
            state.hand_q, ref_joints, self.reward_cfg.beta_bc
        ).mean(axis=1)
        r_con = rewards.contact_reward(
            state.contact_positions,
            state.contact_flags,
            np.swapaxes(ref.contacts[:, frame], 0, 1),
            np.swapaxes(ref.contact_mask[:, frame], 0, 1),
            self.reward_cfg.beta_con,
            self.reward_cfg.d_max,
        )
        breakdown = rewards.total_reward(
            r_task, factors, r_imi, r_bc, r_con, self.reward_cfg
        )
        distances = rewards.tracking_distances(achieved, target)
        finger = np.linalg.norm(keypoints - ref_keypoints, axis=-1).mean(axis=(1, 2))
        return breakdown, distances, finger

    def step(self, raw_actions: np.ndarray, gains: sim.VirtualGains) -> StepResult:
        """
        Apply actions for one control step.

        :param raw_actions: (B, 2J) policy outputs, clipped to [-1, 1] by the
            action mapping.
        """
        ref = self.reference
        hand = self.simulator.hand
        next_frame = self.frame + 1
        q_ref = np.swapaxes(ref.joints[:, next_frame], 0, 1)
        if self.replay_reference:
            targets = q_ref
        else:
            raw_actions = np.asarray(raw_actions, dtype=np.float64)
            if raw_actions.shape != (self.n_envs, self.act_dim):
                raise actions.ActionError(
                    f"expected actions of shape ({self.n_envs}, {self.act_dim})"
                )
            targets = self.action_map.targets(
                raw_actions.reshape(self.n_envs, 2, hand.joint_count), q_ref
            )
        self.joint_targets = np.array(targets)
        self.state = self.simulator.step(
            self.state, targets, ref.clip.object_targets[next_frame], gains
        )
        self.frame = next_frame
        self.length += 1

        breakdown, distances, finger = self.rewards_for(self.state, self.frame)
        achieved = self.state.object_rows()
        d_pos, d_rot, _ = distances
        terminated = (d_pos > self.thresholds.pos) | (d_rot > self.thresholds.rot)
        if self.thresholds.finger is not None:
            terminated |= finger > self.thresholds.finger
        done = terminated | (self.frame >= ref.clip.frames - 1)

        self.returns += np.stack(
            [breakdown.term(term) for term in rewards.TERMS] + [breakdown.r_total],
            axis=1,
        )
        episodes = []
        for env in np.flatnonzero(done):
            totals = self.returns[env]
            episodes.append(
                EpisodeRecord(
                    length=int(self.length[env]),
                    task=float(totals[0]),
                    imi=float(totals[1]),
                    bc=float(totals[2]),
                    con=float(totals[3]),
                    total=float(totals[4]),
                    terminated=bool(terminated[env]),
                )
            )
        if np.any(done):
            fresh = self._initial_state(self.n_envs)
            self.state = self.state.select(done, fresh)
            self.frame = np.where(done, 0, self.frame)
            self.length = np.where(done, 0, self.length)
            self.returns[done] = 0.0
            self.joint_targets = np.where(
                done[:, None, None], fresh.hand_q, self.joint_targets
            )
        return StepResult(
            obs=self.observe(),
            breakdown=breakdown,
            done=done,
            terminated=terminated,
            episodes=episodes,
            distances=distances,
            achieved=achieved,
        )


def from_config(
    cfg: config.RunConfig,
    reference: Reference,
    simulator: sim.Simulator,
    n_envs: int,
    rng: np.random.Generator,
    replay_reference: bool = False,
) -> TrackingEnv:
    """Environment for a run configuration, with thresholds from `cfg.train`."""
    action_map = actions.ActionMap(
        hand=simulator.hand,
        cfg=cfg.actions,
        half_ranges=actions.wrist_half_ranges(reference.joints)[None],
    )
    return TrackingEnv(
        reference=reference,
        simulator=simulator,
        action_map=action_map,
        reward_cfg=cfg.effective_rewards,
        thresholds=Thresholds(pos=cfg.train.term_pos, rot=cfg.train.term_rot),
        n_envs=n_envs,
        rng=rng,
        reset_noise=cfg.train.reset_noise,
        replay_reference=replay_reference,
    )
