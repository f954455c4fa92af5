# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import dataclasses
import logging
import pathlib
from typing import Any
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from dexc import assets
from dexc import config
from dexc import demo
from dexc import sim

"""
Demonstration preprocessing.

Replays the reference joints against the pinned object so the hands settle
outside the object surface, and approximates per-frame hand-object contacts
from proximity between hand geometry and object surface points.
"""

SCHEMA_VERSION = 1

CONTACTS_SUFFIX = ".contacts.json"
RETARGET_SUFFIX = ".retarget.json"


class PrepError(Exception):
    """Raised when preprocessing fails or its artifacts are invalid."""


@dataclasses.dataclass(frozen=True, eq=False)
class ContactAnnotation:
    """
    Approximate contacts for one hand.

    :contacts: (T, N, K, 3) mean contact position per part and link, the zero
        vector where `mask` is False.
    :mask: (T, N, K) validity.
    """

    contacts: np.ndarray
    mask: np.ndarray
    gamma: float
    n_c: int
    d_max: float

    def __post_init__(self):
        if self.contacts.shape != self.mask.shape + (3,):
            raise PrepError("contacts and mask shapes disagree")
        if np.any(self.contacts[~self.mask] != 0.0):
            raise PrepError("contacts must be zero where the mask is false")


@dataclasses.dataclass(frozen=True, eq=False)
class Retarget:
    """Achieved joints (2, T, J) and keypoints (2, T, K, 3) from replay."""

    joints: np.ndarray
    keypoints: np.ndarray
    max_penetration: float


def sidecar_path(demo_path: pathlib.Path, suffix: str) -> pathlib.Path:
    name = demo_path.name
    if name.endswith(".json"):
        name = name[: -len(".json")]
    return demo_path.with_name(name + suffix)


def penetration_depths(
    simulator: sim.Simulator, clip: demo.DemoClip, hand_joints: np.ndarray
) -> np.ndarray:
    """
    Penetration of every link into the target object, (2, T, K).

    Zero or negative values mean the sphere is outside every part.
    """
    poses = simulator.object.part_poses(
        clip.positions, clip.quaternions, clip.joint_angles
    )
    centers = simulator.hand.keypoints(np.swapaxes(hand_joints, 0, 1))
    geometry = simulator.link_geometry(centers, poses.rotations, poses.centers)
    depth = simulator.hand.link_radii - np.min(geometry.signed_distance, axis=2)
    return np.swapaxes(depth, 0, 1)


def replay_retarget(
    clip: demo.DemoClip,
    simulator: sim.Simulator,
    params: config.PrepConfig,
    logger: Optional[logging.Logger] = None,
) -> Retarget:
    """
    Replay reference joints as soft PD targets with the object pinned.

    At each frame the object is fixed at its target, the hands are driven
    toward that frame's reference joints with gains scaled by
    `params.replay_gain_scale` for `params.replay_substeps` sub-steps, and the
    resulting joints and link keypoints are recorded.

    :raises PrepError: If the simulation diverges; the message names the frame.
    """
    logger = logger or logging.getLogger("dexc")
    hand = simulator.hand
    if clip.joint_count != hand.joint_count:
        raise PrepError(
            f"clip has {clip.joint_count} joints, "
            f"hand {hand.name} has {hand.joint_count}"
        )
    if clip.keypoint_count != hand.link_count:
        raise PrepError(
            f"clip has {clip.keypoint_count} keypoints, hand {hand.name} "
            f"has {hand.link_count} links"
        )

    joints = np.zeros_like(clip.hand_joints)
    saved_scale = simulator.hand_gain_scale
    simulator.hand_gain_scale = params.replay_gain_scale
    try:
        state = simulator.reset(clip, 0)
        for frame in range(clip.frames):
            try:
                state = simulator.step(
                    state,
                    clip.hand_joints[:, frame][None],
                    clip.object_targets[frame],
                    sim.ZERO_GAINS,
                    pinned=True,
                    substeps=params.replay_substeps,
                )
            except sim.SimulationError as err:
                raise PrepError(f"frame {frame}: {err}")
            joints[:, frame] = state.hand_q[0]
            logger.debug("replayed frame %d", frame)
    finally:
        simulator.hand_gain_scale = saved_scale

    keypoints = hand.keypoints(joints)
    depth = float(np.max(penetration_depths(simulator, clip, joints)))
    logger.info("replay done, max penetration %.4f m", max(depth, 0.0))
    return Retarget(joints=joints, keypoints=keypoints, max_penetration=max(depth, 0.0))


def farthest_point_subsample(points: np.ndarray, n: int) -> np.ndarray:
    """
    Greedy max-min subsampling seeded at index 0.

    :param points: (P, 3) array, P >= 1.
    :param n: Number of points to keep, at least 1.
    :return: min(n, P) indices in selection order.
    """
    points = np.asarray(points, dtype=np.float64)
    if n < 1:
        raise PrepError("subsample size must be at least 1")
    if len(points) == 0:
        raise PrepError("cannot subsample an empty point set")
    if n >= len(points):
        return np.arange(len(points))
    selected = [0]
    nearest = np.linalg.norm(points - points[0], axis=1)
    nearest[0] = -np.inf
    for _ in range(1, n):
        # selected points stay at -inf
        index = int(np.argmax(nearest))
        selected.append(index)
        nearest = np.minimum(nearest, np.linalg.norm(points - points[index], axis=1))
        nearest[index] = -np.inf
    return np.array(selected)


def sphere_directions(count: int) -> np.ndarray:
    """`count` nearly uniform unit vectors on a Fibonacci spiral."""
    index = np.arange(count) + 0.5
    z = 1.0 - 2.0 * index / count
    radius = np.sqrt(1.0 - z * z)
    angle = np.pi * (3.0 - np.sqrt(5.0)) * index
    return np.stack([radius * np.cos(angle), radius * np.sin(angle), z], axis=1)


def hand_points(
    link_centers: np.ndarray, radii: np.ndarray, samples: int
) -> np.ndarray:
    """Link centres followed by `samples` points on every link sphere."""
    directions = sphere_directions(samples)
    shell = link_centers[:, None, :] + radii[:, None, None] * directions[None]
    return np.concatenate([link_centers, shell.reshape(-1, 3)])


def frame_contacts(
    part_points: list[np.ndarray],
    points: np.ndarray,
    link_centers: np.ndarray,
    gamma: float,
    n_c: int,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Contacts of one hand for one frame.

    :param part_points: World surface points of every part.
    :param points: (M, 3) hand points.
    :param link_centers: (K, 3) link centres receiving the contacts.
    :return: Contacts (N, K, 3) and mask (N, K).
    """
    link_count = len(link_centers)
    contacts = np.zeros((len(part_points), link_count, 3))
    mask = np.zeros((len(part_points), link_count), dtype=bool)
    tree = cKDTree(points)
    for part, surface in enumerate(part_points):
        if len(surface) == 0:
            raise PrepError(f"part {part} has no surface points")
        distance, _ = tree.query(surface)
        marked = surface[distance < gamma]
        if len(marked) == 0:
            continue
        if len(marked) > n_c:
            marked = marked[farthest_point_subsample(marked, n_c)]
        to_links = np.linalg.norm(marked[:, None, :] - link_centers[None], axis=2)
        owner = np.argmin(to_links, axis=1)
        for link in np.unique(owner):
            contacts[part, link] = marked[owner == link].mean(axis=0)
            mask[part, link] = True
    return contacts, mask


def approximate_contacts(
    clip: demo.DemoClip,
    obj: assets.ObjectModel,
    hand: assets.HandModel,
    gamma: float,
    n_c: int,
    d_max: float = 0.10,
    keypoints: Optional[np.ndarray] = None,
    sphere_samples: int = 16,
) -> tuple[ContactAnnotation, ContactAnnotation]:
    """
    Approximate hand-object contacts for every frame.

    Object surface points closer than `gamma` to any hand point are marked,
    thinned to at most `n_c` per part by farthest point subsampling, assigned
    to their nearest link centre and averaged per link.

    :param keypoints: (2, T, K, 3) link centres, defaults to the clip's
        reference keypoints.
    :return: Annotations for the left and right hand.
    """
    if gamma <= 0.0:
        raise PrepError("gamma must be positive")
    if n_c < 1:
        raise PrepError("n_c must be at least 1")
    if keypoints is None:
        keypoints = clip.hand_keypoints
    if keypoints.shape[-2] != hand.link_count:
        raise PrepError(
            f"{keypoints.shape[-2]} keypoints for a hand with {hand.link_count} links"
        )
    poses = obj.part_poses(clip.positions, clip.quaternions, clip.joint_angles)
    surfaces = [
        obj.world_surface_points(poses, part) for part in range(assets.PART_COUNT)
    ]
    annotations = []
    for side in range(len(demo.HANDS)):
        contacts = np.zeros((clip.frames, assets.PART_COUNT, hand.link_count, 3))
        mask = np.zeros((clip.frames, assets.PART_COUNT, hand.link_count), dtype=bool)
        for frame in range(clip.frames):
            centers = keypoints[side, frame]
            contacts[frame], mask[frame] = frame_contacts(
                [surface[frame] for surface in surfaces],
                hand_points(centers, hand.link_radii, sphere_samples),
                centers,
                gamma,
                n_c,
            )
        annotations.append(
            ContactAnnotation(
                contacts=contacts, mask=mask, gamma=gamma, n_c=n_c, d_max=d_max
            )
        )
    return annotations[0], annotations[1]


def contacts_to_dict(
    annotations: tuple[ContactAnnotation, ContactAnnotation], config_hash: str
) -> dict[str, Any]:
    first = annotations[0]
    frames, parts, links = first.mask.shape
    return {
        "schema_version": SCHEMA_VERSION,
        "T": frames,
        "N": parts,
        "K": links,
        "gamma": first.gamma,
        "n_c": first.n_c,
        "d_max": first.d_max,
        "config_hash": config_hash,
        "hands": {
            side: {
                "contacts": annotation.contacts.reshape(-1).tolist(),
                "mask": annotation.mask.reshape(-1).astype(int).tolist(),
            }
            for side, annotation in zip(demo.HANDS, annotations)
        },
    }


def contacts_from_dict(
    dct: dict[str, Any]
) -> tuple[ContactAnnotation, ContactAnnotation]:
    if dct.get("schema_version") != SCHEMA_VERSION:
        raise PrepError(f"unsupported schema_version: {dct.get('schema_version')}")
    try:
        shape = (int(dct["T"]), int(dct["N"]), int(dct["K"]))
        annotations = tuple(
            ContactAnnotation(
                contacts=np.array(dct["hands"][side]["contacts"], dtype=np.float64)
                .reshape(shape + (3,)),
                mask=np.array(dct["hands"][side]["mask"], dtype=bool).reshape(shape),
                gamma=float(dct["gamma"]),
                n_c=int(dct["n_c"]),
                d_max=float(dct["d_max"]),
            )
            for side in demo.HANDS
        )
    except (KeyError, TypeError, ValueError) as err:
        raise PrepError(f"malformed contacts: {err}")
    return annotations[0], annotations[1]


def retarget_to_dict(retarget: Retarget, config_hash: str) -> dict[str, Any]:
    _, frames, joint_count = retarget.joints.shape
    return {
        "schema_version": SCHEMA_VERSION,
        "T": frames,
        "J": joint_count,
        "K": retarget.keypoints.shape[2],
        "max_penetration": retarget.max_penetration,
        "config_hash": config_hash,
        "hands": {
            side: {
                "joints": retarget.joints[index].reshape(-1).tolist(),
                "keypoints": retarget.keypoints[index].reshape(-1).tolist(),
            }
            for index, side in enumerate(demo.HANDS)
        },
    }


def retarget_from_dict(dct: dict[str, Any]) -> Retarget:
    if dct.get("schema_version") != SCHEMA_VERSION:
        raise PrepError(f"unsupported schema_version: {dct.get('schema_version')}")
    try:
        frames, joint_count, links = int(dct["T"]), int(dct["J"]), int(dct["K"])
        joints = np.stack(
            [
                np.array(dct["hands"][side]["joints"], dtype=np.float64).reshape(
                    frames, joint_count
                )
                for side in demo.HANDS
            ]
        )
        keypoints = np.stack(
            [
                np.array(dct["hands"][side]["keypoints"], dtype=np.float64).reshape(
                    frames, links, 3
                )
                for side in demo.HANDS
            ]
        )
        return Retarget(joints, keypoints, float(dct["max_penetration"]))
    except (KeyError, TypeError, ValueError) as err:
        raise PrepError(f"malformed retarget: {err}")
