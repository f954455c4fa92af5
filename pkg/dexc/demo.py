# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import dataclasses
import json
import pathlib
from typing import Any
from typing import Callable
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation
from scipy.spatial.transform import Slerp

from dexc import assets
from dexc import rotations

"""
Demonstration clips.

A clip pairs a dense sequence of object targets with reference joint values
and keypoints for two hands. Clips are written as JSON documents; the
synthetic generator in this module stands in for motion-capture data.
"""

SCHEMA_VERSION = 1

HANDS = ("left", "right")
LEFT, RIGHT = 0, 1

QUATERNION_TOLERANCE = 1e-6
LIMIT_TOLERANCE = 1e-9
PENETRATION_TOLERANCE = 0.01

SCRIPTS = ("lift", "lift-open-close", "lift-reorient-open")

LIFT_HEIGHT = 0.15
OPEN_ANGLE = 1.2
REORIENT_YAW = 0.5
PREGRASP_OFFSET = 0.08
PALM_CLEARANCE = 0.002
PALM_SIDE_OFFSET = 0.04
GRASP_CLOSURE = 0.21


class DemoError(Exception):
    """Raised when a demonstration cannot be built, read or written."""


@dataclasses.dataclass(frozen=True)
class ObjectState:
    """Object base pose and articulation angle for one frame."""

    position: tuple[float, float, float]
    rotation: tuple[float, float, float, float]
    joint_angle: float

    @classmethod
    def from_row(cls, row: np.ndarray) -> "ObjectState":
        return cls(
            position=tuple(float(v) for v in row[0:3]),  # type: ignore[arg-type]
            rotation=tuple(float(v) for v in row[3:7]),  # type: ignore[arg-type]
            joint_angle=float(row[7]),
        )

    def to_row(self) -> np.ndarray:
        return np.array([*self.position, *self.rotation, self.joint_angle])


@dataclasses.dataclass(frozen=True, eq=False)
class DemoClip:
    """
    One bimanual demonstration.

    :object_targets: (T, 8) rows of position, wxyz quaternion and joint angle.
    :hand_joints: (2, T, J) reference joints, left hand first.
    :hand_keypoints: (2, T, K, 3) reference keypoints, left hand first.
    """

    object_id: str
    dt: float
    object_targets: np.ndarray
    hand_joints: np.ndarray
    hand_keypoints: np.ndarray
    metadata: dict[str, Any] = dataclasses.field(default_factory=dict)
    part_count: int = assets.PART_COUNT

    @property
    def frames(self) -> int:
        return len(self.object_targets)

    @property
    def joint_count(self) -> int:
        return self.hand_joints.shape[-1]

    @property
    def keypoint_count(self) -> int:
        return self.hand_keypoints.shape[-2]

    @property
    def positions(self) -> np.ndarray:
        return self.object_targets[:, 0:3]

    @property
    def quaternions(self) -> np.ndarray:
        return self.object_targets[:, 3:7]

    @property
    def joint_angles(self) -> np.ndarray:
        return self.object_targets[:, 7]

    def target(self, frame: int) -> ObjectState:
        return ObjectState.from_row(self.object_targets[frame])

    def replace(self, **changes) -> "DemoClip":
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class Violation:
    """A broken clip invariant: `field` at `frame` (None for whole-clip rules)."""

    field: str
    frame: Optional[int]
    rule: str

    def __str__(self):
        where = self.field if self.frame is None else f"{self.field}[{self.frame}]"
        return f"{where}: {self.rule}"


def validate_demo(
    clip: DemoClip,
    obj: Optional[assets.ObjectModel] = None,
    hand: Optional[assets.HandModel] = None,
) -> list[Violation]:
    """
    Check every clip invariant.

    Quaternion continuity is checked on the stored sequence as is, so a
    sign flip is reported even though it describes the same rotation.

    :param clip: Clip to check.
    :param obj: When given, joint angles are checked against its limits.
    :param hand: When given with `obj`, the hand link spheres must not sink
        into the part boxes deeper than `PENETRATION_TOLERANCE`.
    :return: Violations, empty when the clip is valid.
    """
    violations: list[Violation] = []
    frames = clip.frames
    if frames < 2:
        violations.append(Violation("object_targets", None, "sequence too short"))
    if not clip.dt > 0.0:
        violations.append(Violation("dt", None, "must be positive"))
    if clip.part_count != assets.PART_COUNT:
        violations.append(Violation("part_count", None, "must be 2"))
    if clip.object_targets.ndim != 2 or clip.object_targets.shape[1] != 8:
        violations.append(Violation("object_targets", None, "rows must have 8 values"))
        return violations
    if clip.hand_joints.ndim != 3 or clip.hand_joints.shape[:2] != (2, frames):
        violations.append(Violation("hand_joints", None, "shape must be (2, T, J)"))
    if clip.hand_keypoints.ndim != 4 or clip.hand_keypoints.shape[:2] != (2, frames):
        violations.append(
            Violation("hand_keypoints", None, "shape must be (2, T, K, 3)")
        )
    elif clip.hand_keypoints.shape[3] != 3:
        violations.append(
            Violation("hand_keypoints", None, "shape must be (2, T, K, 3)")
        )

    for name, array in (
        ("object_targets", clip.object_targets),
        ("hand_joints", clip.hand_joints),
        ("hand_keypoints", clip.hand_keypoints),
    ):
        if array.size and not np.all(np.isfinite(array)):
            bad = np.argwhere(~np.isfinite(array))[0]
            frame = int(bad[0] if name == "object_targets" else bad[1])
            violations.append(Violation(name, frame, "values must be finite"))

    norms = rotations.norms(clip.quaternions)
    for frame in np.flatnonzero(np.abs(norms - 1.0) > QUATERNION_TOLERANCE):
        violations.append(
            Violation("rotation", int(frame), f"norm {norms[frame]:.6g} is not 1")
        )
    dots = np.sum(clip.quaternions[1:] * clip.quaternions[:-1], axis=1)
    for frame in np.flatnonzero(dots < 0.0):
        violations.append(
            Violation("rotation", int(frame) + 1, "sign flip breaks continuity")
        )

    if obj is not None:
        lower, upper = obj.joint_limits
        angles = clip.joint_angles
        outside = (angles < lower - LIMIT_TOLERANCE) | (
            angles > upper + LIMIT_TOLERANCE
        )
        for frame in np.flatnonzero(outside):
            violations.append(
                Violation(
                    "joint_angle",
                    int(frame),
                    f"{angles[frame]:.6g} outside limits [{lower}, {upper}]",
                )
            )
        if clip.object_id != obj.object_id:
            violations.append(
                Violation("object_id", None, f"clip is for {clip.object_id}")
            )
        if hand is not None and not violations:
            violations.extend(_penetrations(clip, obj, hand))
    return violations


def penetration_depths(
    clip: DemoClip, obj: assets.ObjectModel, hand: assets.HandModel
) -> np.ndarray:
    """
    Depth of every hand link sphere inside every part box.

    :return: (2, T, N, K) depths in metres, zero or negative where the
        sphere is clear of the box.
    """
    poses = obj.part_poses(clip.positions, clip.quaternions, clip.joint_angles)
    centers = hand.forward(clip.hand_joints).link_centers
    half = np.stack([part.half_extents for part in obj.parts])
    diff = centers[:, :, None, :, :] - poses.centers[None, :, :, None, :]
    local = np.einsum("tnji,htnkj->htnki", poses.rotations, diff)
    excess = np.abs(local) - half[None, None, :, None, :]
    outside = np.linalg.norm(np.maximum(excess, 0.0), axis=-1)
    inside = np.minimum(np.max(excess, axis=-1), 0.0)
    return hand.link_radii - (outside + inside)


def _penetrations(
    clip: DemoClip, obj: assets.ObjectModel, hand: assets.HandModel
) -> list[Violation]:
    if clip.hand_joints.shape[2] != hand.joint_count:
        return [
            Violation("hand_joints", None, f"hand has {hand.joint_count} joints")
        ]
    depths = penetration_depths(clip, obj, hand)
    violations = []
    for frame in np.flatnonzero(np.any(depths > PENETRATION_TOLERANCE, axis=(0, 2, 3))):
        side, part, link = np.unravel_index(
            np.argmax(depths[:, frame]), depths[:, frame].shape
        )
        violations.append(
            Violation(
                "hand_joints",
                int(frame),
                f"{HANDS[side]} {hand.links[link].name} is "
                f"{depths[side, frame, part, link]:.3g} m inside "
                f"{obj.parts[part].name}",
            )
        )
    return violations


def smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def ramp(u: np.ndarray, start: float, end: float) -> np.ndarray:
    """Eased 0 to 1 transition over the normalized time window [start, end]."""
    return smoothstep((u - start) / (end - start))


@dataclasses.dataclass(frozen=True)
class Script:
    """
    Scripted motion as eased phases over normalized time u in [0, 1].

    Each callable maps u (an array) to its profile. `lid_grip` is the blend
    weight moving the right hand from the base grasp onto the lid.
    """

    approach: Callable[[np.ndarray], np.ndarray]
    lift: Callable[[np.ndarray], np.ndarray]
    yaw: Callable[[np.ndarray], np.ndarray]
    joint_angle: Callable[[np.ndarray], np.ndarray]
    lid_grip: Callable[[np.ndarray], np.ndarray]


def _zero(u: np.ndarray) -> np.ndarray:
    return np.zeros_like(u)


def _lift_script() -> Script:
    return Script(
        approach=lambda u: ramp(u, 0.0, 0.25),
        lift=lambda u: LIFT_HEIGHT * ramp(u, 0.3, 0.7),
        yaw=_zero,
        joint_angle=_zero,
        lid_grip=_zero,
    )


def _lift_open_close_script() -> Script:
    return Script(
        approach=lambda u: ramp(u, 0.0, 0.15),
        lift=lambda u: LIFT_HEIGHT * ramp(u, 0.15, 0.35),
        yaw=_zero,
        joint_angle=lambda u: OPEN_ANGLE * (ramp(u, 0.45, 0.65) - ramp(u, 0.7, 0.9)),
        lid_grip=lambda u: ramp(u, 0.35, 0.45),
    )


def _lift_reorient_open_script() -> Script:
    return Script(
        approach=lambda u: ramp(u, 0.0, 0.15),
        lift=lambda u: LIFT_HEIGHT * ramp(u, 0.15, 0.35),
        yaw=lambda u: REORIENT_YAW * ramp(u, 0.35, 0.55),
        joint_angle=lambda u: OPEN_ANGLE * ramp(u, 0.65, 0.9),
        lid_grip=lambda u: ramp(u, 0.55, 0.65),
    )


SCRIPT_FACTORIES: dict[str, Callable[[], Script]] = {
    "lift": _lift_script,
    "lift-open-close": _lift_open_close_script,
    "lift-reorient-open": _lift_reorient_open_script,
}


def _grasp_frames(
    obj: assets.ObjectModel, hand: assets.HandModel
) -> tuple[np.ndarray, np.ndarray]:
    """
    Palm positions and rotations of both hands in the base part frame.

    The palms face the two x faces of the base with the fingers running
    along y. The palm normal is local -z.
    """
    reach = obj.parts[0].half_extents[0] + hand.links[0].radius + PALM_CLEARANCE
    positions = np.array(
        [[-reach, PALM_SIDE_OFFSET, 0.0], [reach, -PALM_SIDE_OFFSET, 0.0]]
    )
    left = np.array([[0.0, 0.0, -1.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    right = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return positions, np.stack([left, right])


def _blend_rotations(first: Rotation, second: Rotation, weight: np.ndarray) -> Rotation:
    quats = []
    for index, w in enumerate(weight):
        pair = Rotation.concatenate([first[index], second[index]])
        quats.append(Slerp([0.0, 1.0], pair)([float(w)]).as_quat()[0])
    return Rotation.from_quat(np.array(quats))


def generate_demo(
    script: str,
    obj: assets.ObjectModel,
    hand: assets.HandModel,
    frames: int,
    dt: float,
    start_position: Optional[tuple[float, float, float]] = None,
) -> DemoClip:
    """
    Generate a synthetic bimanual demonstration.

    Both hands approach the base from outside its x faces, close their
    fingers, then follow the object. In opening scripts the right hand
    moves onto the lid before the joint moves.

    :param script: One of `SCRIPTS`.
    :param obj: Object the clip manipulates.
    :param hand: Hand used for both sides.
    :param frames: Number of frames T, at least 2.
    :param dt: Seconds per frame.
    :param start_position: Object rest position, defaults to resting on the
        table at the origin.
    :return: A clip that passes `validate_demo`.
    """
    if script not in SCRIPT_FACTORIES:
        raise DemoError(f"unknown script: {script}")
    if frames < 2:
        raise DemoError("sequence too short")
    if not dt > 0.0:
        raise DemoError("dt must be positive")
    plan = SCRIPT_FACTORIES[script]()

    u = np.linspace(0.0, 1.0, frames)
    angles = plan.joint_angle(u)
    lower, upper = obj.joint_limits
    if angles.min() < lower or angles.max() > upper:
        raise DemoError(
            f"script {script} needs joint angles up to {angles.max():.3g}, "
            f"object limits are [{lower}, {upper}]"
        )

    if start_position is None:
        start = np.array([0.0, 0.0, obj.parts[0].half_extents[2]])
    else:
        start = np.asarray(start_position, dtype=np.float64)
    positions = start + np.outer(plan.lift(u), [0.0, 0.0, 1.0])
    quats = rotations.canonicalize_sequence(
        rotations.xyzw_to_wxyz(Rotation.from_euler("z", plan.yaw(u)).as_quat())
    )
    targets = np.concatenate([positions, quats, angles[:, None]], axis=1)

    poses = obj.part_poses(positions, quats, angles)
    grasp_positions, grasp_rotations = _grasp_frames(obj, hand)
    approach = plan.approach(u)
    lid_grip = plan.lid_grip(u)
    closure = smoothstep(2.0 * approach - 1.0)

    finger_open = hand.lower[assets.WRIST_DOFS :]
    finger_grasp = finger_open + GRASP_CLOSURE * (
        hand.upper[assets.WRIST_DOFS :] - finger_open
    )
    joints = np.zeros((2, frames, hand.joint_count))
    for side in (LEFT, RIGHT):
        outward = np.sign(grasp_positions[side, 0]) * PREGRASP_OFFSET
        local = grasp_positions[side] + np.outer(1.0 - approach, [outward, 0.0, 0.0])
        base_palm = poses.centers[:, 0] + np.einsum(
            "tij,tj->ti", poses.rotations[:, 0], local
        )
        base_rot = Rotation.from_matrix(poses.rotations[:, 0] @ grasp_rotations[side])
        palm, palm_rot = base_palm, base_rot
        if side == RIGHT and np.any(lid_grip):
            lid_palm = poses.centers[:, 1] + np.einsum(
                "tij,tj->ti", poses.rotations[:, 1], local
            )
            lid_rot = Rotation.from_matrix(
                poses.rotations[:, 1] @ grasp_rotations[side]
            )
            palm = base_palm + lid_grip[:, None] * (lid_palm - base_palm)
            palm_rot = _blend_rotations(base_rot, lid_rot, lid_grip)
        euler = np.unwrap(palm_rot.as_euler("xyz"), axis=0)
        joints[side, :, 0:3] = palm
        joints[side, :, 3:6] = euler
        joints[side, :, assets.WRIST_DOFS :] = finger_open + closure[:, None] * (
            finger_grasp - finger_open
        )
    joints = np.clip(joints, hand.lower, hand.upper)
    keypoints = hand.keypoints(joints)

    return DemoClip(
        object_id=obj.object_id,
        dt=float(dt),
        object_targets=targets,
        hand_joints=joints,
        hand_keypoints=keypoints,
        metadata={
            "name": script,
            "script": script,
            "hand": hand.name,
            "start_frame": 0,
            "end_frame": frames - 1,
        },
    )


def _array(data: Any, name: str, ndim: int) -> np.ndarray:
    try:
        array = np.array(data, dtype=np.float64)
    except (TypeError, ValueError):
        raise DemoError(f"{name}: ragged or non-numeric array")
    if array.ndim != ndim:
        raise DemoError(f"{name}: ragged or non-numeric array")
    return array


def clip_from_dict(dct: dict[str, Any]) -> DemoClip:
    """
    Build a clip from its JSON document, canonicalizing quaternion signs.

    :raises DemoError: On schema mismatch, ragged arrays, short sequences or
        quaternions whose norm is off by more than the tolerance.
    """
    if dct.get("schema_version") != SCHEMA_VERSION:
        raise DemoError(f"unsupported schema_version: {dct.get('schema_version')}")
    missing = [
        key
        for key in ("object_id", "dt", "T", "J", "K", "N", "object_targets", "hands")
        if key not in dct
    ]
    if missing:
        raise DemoError(f"missing fields: {', '.join(missing)}")
    frames, joint_count, keypoint_count = int(dct["T"]), int(dct["J"]), int(dct["K"])
    if int(dct["N"]) != assets.PART_COUNT:
        raise DemoError("N must be 2")
    if frames < 2:
        raise DemoError("sequence too short")

    targets = _array(dct["object_targets"], "object_targets", 2)
    if targets.shape != (frames, 8):
        raise DemoError(f"object_targets: expected shape ({frames}, 8)")
    hands = dct["hands"]
    if not isinstance(hands, dict) or sorted(hands) != sorted(HANDS):
        raise DemoError("hands must have left and right entries")
    if not all(isinstance(hands[side], dict) for side in HANDS):
        raise DemoError("hands: each hand must be an object")
    joint_arrays = [
        _array(hands[side].get("joints"), f"hands.{side}.joints", 2) for side in HANDS
    ]
    if any(array.shape != (frames, joint_count) for array in joint_arrays):
        raise DemoError(f"hands: joints must have shape ({frames}, {joint_count})")
    keypoint_arrays = [
        _array(hands[side].get("keypoints"), f"hands.{side}.keypoints", 3)
        for side in HANDS
    ]
    if any(array.shape != (frames, keypoint_count, 3) for array in keypoint_arrays):
        raise DemoError(
            f"hands: keypoints must have shape ({frames}, {keypoint_count}, 3)"
        )

    norms = rotations.norms(targets[:, 3:7])
    bad = np.flatnonzero(np.abs(norms - 1.0) > QUATERNION_TOLERANCE)
    if len(bad):
        frame = int(bad[0])
        raise DemoError(
            f"frame {frame}: rotation norm {norms[frame]:.6g} outside tolerance"
        )
    targets[:, 3:7] = rotations.canonicalize_sequence(targets[:, 3:7])

    dt = float(dct["dt"])
    if not dt > 0.0:
        raise DemoError("dt must be positive")
    return DemoClip(
        object_id=str(dct["object_id"]),
        dt=dt,
        object_targets=targets,
        hand_joints=np.stack(joint_arrays),
        hand_keypoints=np.stack(keypoint_arrays),
        metadata=dict(dct.get("metadata", {})),
    )


def clip_to_dict(clip: DemoClip) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "object_id": clip.object_id,
        "dt": clip.dt,
        "T": clip.frames,
        "J": clip.joint_count,
        "K": clip.keypoint_count,
        "N": clip.part_count,
        "object_targets": clip.object_targets.tolist(),
        "hands": {
            side: {
                "joints": clip.hand_joints[index].tolist(),
                "keypoints": clip.hand_keypoints[index].tolist(),
            }
            for index, side in enumerate(HANDS)
        },
        "metadata": clip.metadata,
    }


def load_demo(path: pathlib.Path) -> DemoClip:
    """Read a clip; `DemoError` messages are prefixed with the path."""
    try:
        with path.open() as demo_file:
            data = json.load(demo_file)
    except json.JSONDecodeError as err:
        raise DemoError(f"{path}: invalid JSON: {err.msg}")
    if not isinstance(data, dict):
        raise DemoError(f"{path}: demo must be a JSON object")
    try:
        return clip_from_dict(data)
    except DemoError as err:
        raise DemoError(f"{path}: {err}")


def save_demo(clip: DemoClip, path: pathlib.Path) -> None:
    with path.open("w") as demo_file:
        json.dump(clip_to_dict(clip), demo_file)
        demo_file.write("\n")
