# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import dataclasses
from typing import Union

import numpy as np

from dexc import config
from dexc import demo
from dexc import rotations

"""
Reward terms.

Object states are passed either as `demo.ObjectState` or as rows of
(position, wxyz quaternion, joint angle) with any leading batch shape.
Every term is an exponential of a distance and lies in (0, 1].
"""

TERMS = ("task", "imi", "bc", "con")

QUATERNION_TOLERANCE = 1e-6

StateLike = Union[demo.ObjectState, np.ndarray]


class RewardError(Exception):
    """Raised when reward inputs are inconsistent."""


def as_rows(state: StateLike) -> np.ndarray:
    if isinstance(state, demo.ObjectState):
        return state.to_row()
    rows = np.asarray(state, dtype=np.float64)
    if rows.shape[-1] != 8:
        raise RewardError(f"object state rows need 8 values, got {rows.shape[-1]}")
    return rows


def rot_distance(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Geodesic angle between unit quaternions, 2*acos(|<q1, q2>|), in [0, pi]."""
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    for quat in (q1, q2):
        if np.any(np.abs(rotations.norms(quat) - 1.0) > QUATERNION_TOLERANCE):
            raise RewardError("quaternions must be normalized")
    inner = np.abs(np.sum(q1 * q2, axis=-1))
    return 2.0 * np.arccos(np.clip(inner, 0.0, 1.0))


def tracking_distances(
    achieved: StateLike, target: StateLike
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Position, rotation and joint angle distances (d_pos, d_rot, d_ang)."""
    achieved = as_rows(achieved)
    target = as_rows(target)
    d_pos = np.linalg.norm(achieved[..., 0:3] - target[..., 0:3], axis=-1)
    d_rot = rot_distance(achieved[..., 3:7], target[..., 3:7])
    d_ang = np.abs(achieved[..., 7] - target[..., 7])
    return d_pos, d_rot, d_ang


def task_reward(
    achieved: StateLike, target: StateLike, cfg: config.RewardConfig
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """
    Object tracking reward r_pos * r_rot * r_angle.

    :return: r_task and its three factors.
    """
    d_pos, d_rot, d_ang = tracking_distances(achieved, target)
    r_pos = np.exp(-cfg.beta_pos * d_pos)
    r_rot = np.exp(-cfg.beta_rot * d_rot)
    r_ang = np.exp(-cfg.beta_ang * d_ang)
    return r_pos * r_rot * r_ang, (r_pos, r_rot, r_ang)


def _same_shape(first: np.ndarray, second: np.ndarray, what: str) -> None:
    if first.shape != second.shape:
        raise RewardError(f"{what} shapes differ: {first.shape} vs {second.shape}")


def imitation_reward(x_hat: np.ndarray, x: np.ndarray, beta: float) -> np.ndarray:
    """Mean over keypoints of exp(-beta * |x_hat - x|); inputs (..., K, 3)."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _same_shape(x_hat, x, "keypoint")
    distance = np.linalg.norm(x_hat - x, axis=-1)
    return np.mean(np.exp(-beta * distance), axis=-1)


def bc_reward(q_hat: np.ndarray, q_ref: np.ndarray, beta: float) -> np.ndarray:
    """Mean over joints of exp(-beta * |q_hat - q_ref|); inputs (..., J)."""
    q_hat = np.asarray(q_hat, dtype=np.float64)
    q_ref = np.asarray(q_ref, dtype=np.float64)
    _same_shape(q_hat, q_ref, "joint")
    return np.mean(np.exp(-beta * np.abs(q_hat - q_ref)), axis=-1)


def contact_distances(
    c_pol: np.ndarray,
    m_pol: np.ndarray,
    c_demo: np.ndarray,
    m_demo: np.ndarray,
    d_max: float,
) -> np.ndarray:
    """
    Masked per-pair contact distance.

    Both masks true gives the position distance, disagreeing masks give
    `d_max`, both false give zero.
    """
    c_pol = np.asarray(c_pol, dtype=np.float64)
    c_demo = np.asarray(c_demo, dtype=np.float64)
    m_pol = np.asarray(m_pol, dtype=bool)
    m_demo = np.asarray(m_demo, dtype=bool)
    _same_shape(c_pol, c_demo, "contact")
    _same_shape(m_pol, m_demo, "mask")
    if c_pol.shape[:-1] != m_pol.shape:
        raise RewardError("contact and mask shapes disagree")
    matched = np.linalg.norm(c_pol - c_demo, axis=-1)
    return np.where(
        m_pol & m_demo, matched, np.where(m_pol != m_demo, d_max, 0.0)
    )


def contact_reward(
    c_pol: np.ndarray,
    m_pol: np.ndarray,
    c_demo: np.ndarray,
    m_demo: np.ndarray,
    beta: float,
    d_max: float,
) -> np.ndarray:
    """
    Contact matching reward averaged over both hands and all pairs.

    :param c_pol: (..., 2, N, K, 3) contacts read from the simulator.
    :param m_pol: (..., 2, N, K) simulator contact flags.
    :param c_demo: Approximated demonstration contacts, same shape.
    :param m_demo: Demonstration validity mask, same shape.
    """
    distance = contact_distances(c_pol, m_pol, c_demo, m_demo, d_max)
    if distance.ndim < 3 or distance.shape[-3] != 2:
        raise RewardError("contacts need a hand axis of size 2")
    return np.mean(np.exp(-beta * distance), axis=(-3, -2, -1))


@dataclasses.dataclass(frozen=True, eq=False)
class RewardBreakdown:
    """Every reward term for one step (scalars or equally shaped arrays)."""

    r_task: np.ndarray
    r_pos: np.ndarray
    r_rot: np.ndarray
    r_angle: np.ndarray
    r_imi: np.ndarray
    r_bc: np.ndarray
    r_con: np.ndarray
    r_total: np.ndarray

    def term(self, name: str) -> np.ndarray:
        """Curriculum term by short name: task, imi, bc or con."""
        return getattr(self, f"r_{name}")


def total_reward(
    r_task: np.ndarray,
    factors: tuple[np.ndarray, np.ndarray, np.ndarray],
    r_imi: np.ndarray,
    r_bc: np.ndarray,
    r_con: np.ndarray,
    cfg: config.RewardConfig,
) -> RewardBreakdown:
    """Weighted sum of the terms, packed with the terms themselves."""
    r_pos, r_rot, r_angle = factors
    total = (
        cfg.lambda_task * r_task
        + cfg.lambda_imi * r_imi
        + cfg.lambda_bc * r_bc
        + cfg.lambda_con * r_con
    )
    return RewardBreakdown(
        r_task=r_task,
        r_pos=r_pos,
        r_rot=r_rot,
        r_angle=r_angle,
        r_imi=r_imi,
        r_bc=r_bc,
        r_con=r_con,
        r_total=total,
    )
