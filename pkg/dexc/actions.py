# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import dataclasses
from typing import Optional

import numpy as np

from dexc import assets
from dexc import config

"""
Policy action to joint target mapping.

All functions accept a batch of actions with the joint axis last and
return targets of the same shape, clamped to the hand joint limits.
"""

WRIST_TRANSLATION = list(assets.WRIST_TRANSLATION)
WRIST_ROTATION = list(assets.WRIST_ROTATION)


class ActionError(Exception):
    """Raised when actions cannot be mapped to joint targets."""


def _check(a: np.ndarray, hand: assets.HandModel, *others: np.ndarray) -> None:
    for array in (a,) + others:
        if array.shape[-1] != hand.joint_count:
            raise ActionError(
                f"expected {hand.joint_count} joint values, got {array.shape[-1]}"
            )


def _affine(a: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return lower + (upper - lower) / 2.0 * (a + 1.0)


def compose_targets(
    a: np.ndarray,
    q_ref: np.ndarray,
    hand: assets.HandModel,
    cfg: config.ActionConfig,
) -> np.ndarray:
    """
    Hybrid targets: wrist residuals around the reference, absolute fingers.

    :param a: Raw actions, clipped to [-1, 1] here.
    :param q_ref: Reference joints of the frame being targeted.
    """
    a = np.clip(np.asarray(a, dtype=np.float64), -1.0, 1.0)
    q_ref = np.asarray(q_ref, dtype=np.float64)
    _check(a, hand, q_ref)
    targets = _affine(a, hand.lower, hand.upper)
    targets[..., WRIST_TRANSLATION] = (
        q_ref[..., WRIST_TRANSLATION] + cfg.s_t * a[..., WRIST_TRANSLATION]
    )
    targets[..., WRIST_ROTATION] = (
        q_ref[..., WRIST_ROTATION] + cfg.s_r * a[..., WRIST_ROTATION]
    )
    return hand.clamp(targets)


def absolute_targets(a: np.ndarray, hand: assets.HandModel) -> np.ndarray:
    """Every joint mapped affinely from [-1, 1] onto its limits."""
    a = np.clip(np.asarray(a, dtype=np.float64), -1.0, 1.0)
    _check(a, hand)
    return hand.clamp(_affine(a, hand.lower, hand.upper))


def wrist_half_ranges(hand_joints: np.ndarray) -> np.ndarray:
    """
    Half of each wrist DoF's motion range over a clip.

    :param hand_joints: (2, T, J) joint trajectories.
    :return: (2, 6) residual scales.
    """
    wrist = hand_joints[..., : assets.WRIST_DOFS]
    return (wrist.max(axis=-2) - wrist.min(axis=-2)) / 2.0


def full_residual_targets(
    a: np.ndarray,
    q_ref: np.ndarray,
    hand: assets.HandModel,
    half_ranges: Optional[np.ndarray],
) -> np.ndarray:
    """
    Wrist residuals scaled to cover the clip's whole wrist motion range.

    :param half_ranges: Residual scale per wrist DoF, broadcastable against
        the wrist slice of `a`; see `wrist_half_ranges`.
    """
    if half_ranges is None:
        raise ActionError("full-residual actions need the clip wrist range")
    a = np.clip(np.asarray(a, dtype=np.float64), -1.0, 1.0)
    q_ref = np.asarray(q_ref, dtype=np.float64)
    _check(a, hand, q_ref)
    targets = _affine(a, hand.lower, hand.upper)
    wrist = slice(0, assets.WRIST_DOFS)
    targets[..., wrist] = q_ref[..., wrist] + half_ranges * a[..., wrist]
    return hand.clamp(targets)


@dataclasses.dataclass(frozen=True, eq=False)
class ActionMap:
    """Action mapping bound to a hand, a configuration and a clip."""

    hand: assets.HandModel
    cfg: config.ActionConfig
    half_ranges: Optional[np.ndarray] = None

    def targets(self, a: np.ndarray, q_ref: np.ndarray) -> np.ndarray:
        mode = self.cfg.mode
        if mode == "hybrid":
            return compose_targets(a, q_ref, self.hand, self.cfg)
        if mode == "absolute":
            return absolute_targets(a, self.hand)
        if mode == "full-residual":
            return full_residual_targets(a, q_ref, self.hand, self.half_ranges)
        raise ActionError(f"unknown action mode: {mode}")
