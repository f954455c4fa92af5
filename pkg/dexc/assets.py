# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import dataclasses
import functools
import json
import pathlib
from typing import Any
from typing import NamedTuple
from typing import Union

import numpy as np

from dexc import rotations

"""
Object and hand models.

An `ObjectModel` is a two-part articulated object: a base part carrying the
free-floating object frame and a second part attached to it by a revolute
joint. A `HandModel` is a floating hand whose first six joints are the wrist
(three translations, three extrinsic x-y-z rotations) followed by a chain of
revolute finger joints carrying sphere collision links.

Both are loaded from JSON asset files or from the builtin toy assets named
``builtin:box-with-lid`` and ``builtin:toy-hand``.
"""

BUILTIN_PREFIX = "builtin:"

WRIST_TRANSLATION = (0, 1, 2)
WRIST_ROTATION = (3, 4, 5)
WRIST_DOFS = 6

PART_COUNT = 2


class AssetError(Exception):
    """Raised when an asset description is invalid."""


def _vector(name: str, value: Any, size: int = 3) -> np.ndarray:
    try:
        array = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise AssetError(f"{name} must be a list of {size} numbers")
    if array.shape != (size,):
        raise AssetError(f"{name} must be a list of {size} numbers")
    return array


def box_surface_points(half_extents: np.ndarray, spacing: float) -> np.ndarray:
    """
    Regular grid of points on the surface of an axis-aligned box.

    :param half_extents: Box half sizes along x, y and z.
    :param spacing: Approximate distance between neighbouring points.
    :return: (P, 3) array in the box frame, P >= 8 (corners always included).
    """
    axes = [
        np.linspace(-h, h, max(2, int(round(2.0 * h / spacing)) + 1))
        for h in half_extents
    ]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    on_surface = np.any(np.isclose(np.abs(grid), half_extents), axis=1)
    return grid[on_surface]


def box_corners(half_extents: np.ndarray) -> np.ndarray:
    signs = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
        dtype=np.float64,
    )
    return signs * half_extents


@dataclasses.dataclass(frozen=True, eq=False)
class PartModel:
    """
    One rigid part of an articulated object.

    :offset: Part centre in the object frame with the joint at zero.
    :surface_points: (P, 3) points on the part surface, in the part frame.
        Used as the object "mesh vertices" for contact approximation and as
        the model points for ADD.
    """

    name: str
    mass: float
    inertia: np.ndarray
    half_extents: np.ndarray
    offset: np.ndarray
    surface_points: np.ndarray

    def __post_init__(self):
        if self.mass <= 0.0:
            raise AssetError(f"part {self.name}: mass must be positive")
        if np.any(self.inertia <= 0.0):
            raise AssetError(f"part {self.name}: inertia entries must be positive")
        if np.any(self.half_extents <= 0.0):
            raise AssetError(f"part {self.name}: half_extents must be positive")
        if len(self.surface_points) < 8:
            raise AssetError(f"part {self.name}: at least 8 surface points required")

    @functools.cached_property
    def corners(self) -> np.ndarray:
        return box_corners(self.half_extents)

    @classmethod
    def from_dict(cls, dct: dict[str, Any]) -> "PartModel":
        name = dct.get("name", "part")
        half_extents = _vector(f"part {name}: half_extents", dct.get("half_extents"))
        if "surface_points" in dct:
            points = np.asarray(dct["surface_points"], dtype=np.float64)
            if points.ndim != 2 or points.shape[1] != 3:
                raise AssetError(f"part {name}: surface_points must be a P x 3 list")
        else:
            spacing = float(dct.get("surface_spacing", 0.01))
            if spacing <= 0.0:
                raise AssetError(f"part {name}: surface_spacing must be positive")
            points = box_surface_points(half_extents, spacing)
        return cls(
            name=name,
            mass=float(dct.get("mass", 0.0)),
            inertia=_vector(f"part {name}: inertia", dct.get("inertia")),
            half_extents=half_extents,
            offset=_vector(f"part {name}: offset", dct.get("offset", [0, 0, 0])),
            surface_points=points,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "mass": self.mass,
            "inertia": self.inertia.tolist(),
            "half_extents": self.half_extents.tolist(),
            "offset": self.offset.tolist(),
            "surface_points": self.surface_points.tolist(),
        }


class PartPoses(NamedTuple):
    """World poses of every part: rotations (..., N, 3, 3), centres (..., N, 3)."""

    rotations: np.ndarray
    centers: np.ndarray


@dataclasses.dataclass(frozen=True, eq=False)
class ObjectModel:
    """
    Two-part articulated object.

    Part 0 is the base; the object position is the base centre. Part 1 rotates
    about `joint_axis` through `joint_anchor` (both in the object frame).
    """

    object_id: str
    parts: tuple[PartModel, PartModel]
    joint_axis: np.ndarray
    joint_anchor: np.ndarray
    joint_limits: tuple[float, float]
    joint_damping: float = 0.01
    joint_armature: float = 0.01
    rotation_armature: float = 0.01

    def __post_init__(self):
        if len(self.parts) != PART_COUNT:
            raise AssetError(f"object {self.object_id}: exactly 2 parts required")
        if abs(np.linalg.norm(self.joint_axis) - 1.0) > 1e-9:
            raise AssetError(f"object {self.object_id}: joint axis must be unit length")
        lower, upper = self.joint_limits
        if not lower < upper:
            raise AssetError(
                f"object {self.object_id}: joint lower limit must be below upper limit"
            )

    @property
    def total_mass(self) -> float:
        return sum(part.mass for part in self.parts)

    @functools.cached_property
    def base_inertia(self) -> np.ndarray:
        """Diagonal rotational inertia of the whole object about the base centre."""
        inertia = self.parts[0].inertia + self.parts[1].inertia
        lever = self.parts[1].offset - self.parts[0].offset
        inertia = inertia + self.parts[1].mass * (np.dot(lever, lever) - lever**2)
        return inertia + self.rotation_armature

    @functools.cached_property
    def joint_inertia(self) -> float:
        """Inertia of the moving part about the joint axis."""
        part = self.parts[1]
        axis = self.joint_axis
        lever = part.offset - self.joint_anchor
        radial = lever - np.dot(lever, axis) * axis
        own = float(np.dot(axis**2, part.inertia))
        return own + part.mass * float(np.dot(radial, radial)) + self.joint_armature

    def part_poses(
        self, position: np.ndarray, rotation: np.ndarray, joint_angle: np.ndarray
    ) -> PartPoses:
        """World pose of both parts for a (batch of) object states."""
        position = np.asarray(position, dtype=np.float64)
        base = rotations.matrices(rotation)
        hinge = rotations.axis_angle_matrices(self.joint_axis, joint_angle)
        lid = base @ hinge
        base_center = position + base @ self.parts[0].offset
        local = (
            np.einsum("...ij,j->...i", hinge, self.parts[1].offset - self.joint_anchor)
            + self.joint_anchor
        )
        lid_center = position + np.einsum("...ij,...j->...i", base, local)
        return PartPoses(
            rotations=np.stack([base, lid], axis=-3),
            centers=np.stack([base_center, lid_center], axis=-2),
        )

    def world_surface_points(self, poses: PartPoses, part: int) -> np.ndarray:
        """Surface points of `part` in world coordinates, shape (..., P, 3)."""
        points = self.parts[part].surface_points
        return (
            np.einsum("...ij,pj->...pi", poses.rotations[..., part, :, :], points)
            + poses.centers[..., part, None, :]
        )

    @classmethod
    def from_dict(cls, dct: dict[str, Any]) -> "ObjectModel":
        object_id = dct.get("object_id")
        if not isinstance(object_id, str):
            raise AssetError("object_id must be str")
        parts = dct.get("parts")
        if not isinstance(parts, list) or len(parts) != PART_COUNT:
            raise AssetError(f"object {object_id}: parts must be a list of 2 parts")
        joint = dct.get("joint", {})
        if not isinstance(joint, dict):
            raise AssetError(f"object {object_id}: joint must be a table")
        limits = joint.get("limits")
        if not (isinstance(limits, list) and len(limits) == 2):
            raise AssetError(f"object {object_id}: joint limits must be [lower, upper]")
        return cls(
            object_id=object_id,
            parts=(PartModel.from_dict(parts[0]), PartModel.from_dict(parts[1])),
            joint_axis=_vector(f"object {object_id}: joint axis", joint.get("axis")),
            joint_anchor=_vector(
                f"object {object_id}: joint anchor", joint.get("anchor")
            ),
            joint_limits=(float(limits[0]), float(limits[1])),
            joint_damping=float(joint.get("damping", 0.01)),
            joint_armature=float(joint.get("armature", 0.01)),
            rotation_armature=float(dct.get("rotation_armature", 0.01)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "object_id": self.object_id,
            "parts": [part.to_dict() for part in self.parts],
            "joint": {
                "axis": self.joint_axis.tolist(),
                "anchor": self.joint_anchor.tolist(),
                "limits": list(self.joint_limits),
                "damping": self.joint_damping,
                "armature": self.joint_armature,
            },
            "rotation_armature": self.rotation_armature,
        }


@dataclasses.dataclass(frozen=True, eq=False)
class FingerJoint:
    """Revolute finger joint, `parent` is a joint index or -1 for the wrist."""

    parent: int
    origin: np.ndarray
    axis: np.ndarray


@dataclasses.dataclass(frozen=True, eq=False)
class LinkModel:
    """Sphere collision link rigidly attached to `joint`'s frame (-1 is wrist)."""

    name: str
    joint: int
    offset: np.ndarray
    radius: float


class Kinematics(NamedTuple):
    """Result of `HandModel.forward` for a batch of joint vectors."""

    link_centers: np.ndarray
    wrist_rotation: np.ndarray
    joint_origins: np.ndarray
    joint_axes: np.ndarray


@dataclasses.dataclass(frozen=True, eq=False)
class HandModel:
    """
    Floating hand with PD-controlled joints.

    Joints 0..2 translate the wrist (meters), joints 3..5 are extrinsic x-y-z
    wrist rotations (radians); joints 6..J-1 are the finger joints described by
    `finger_joints` in order.
    """

    name: str
    joint_names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    armature: np.ndarray
    finger_joints: tuple[FingerJoint, ...]
    links: tuple[LinkModel, ...]

    def __post_init__(self):
        joint_count = len(self.joint_names)
        if joint_count != WRIST_DOFS + len(self.finger_joints):
            raise AssetError(
                f"hand {self.name}: 6 wrist joints plus one entry per finger joint"
            )
        for name in ("lower", "upper", "kp", "kd", "armature"):
            if getattr(self, name).shape != (joint_count,):
                raise AssetError(
                    f"hand {self.name}: {name} must have {joint_count} values"
                )
        if not np.all(self.lower < self.upper):
            raise AssetError(
                f"hand {self.name}: lower limits must be below upper limits"
            )
        if np.any(self.armature <= 0.0):
            raise AssetError(f"hand {self.name}: armature must be positive")
        if len(self.links) < 2:
            raise AssetError(f"hand {self.name}: at least 2 links required")
        for index, joint in enumerate(self.finger_joints):
            if not -1 <= joint.parent < WRIST_DOFS + index or 0 <= joint.parent < 6:
                raise AssetError(
                    f"hand {self.name}: joint {WRIST_DOFS + index} "
                    "parent must precede it"
                )
        for link in self.links:
            if not (link.joint == -1 or WRIST_DOFS <= link.joint < joint_count):
                raise AssetError(
                    f"hand {self.name}: link {link.name} has no such joint"
                )

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    @property
    def link_count(self) -> int:
        return len(self.links)

    @functools.cached_property
    def finger_indices(self) -> np.ndarray:
        return np.arange(WRIST_DOFS, self.joint_count)

    @functools.cached_property
    def link_radii(self) -> np.ndarray:
        return np.array([link.radius for link in self.links])

    @functools.cached_property
    def chain_mask(self) -> np.ndarray:
        """(K, J) booleans, True where joint j moves link k."""
        mask = np.zeros((self.link_count, self.joint_count), dtype=bool)
        mask[:, :WRIST_DOFS] = True
        for k, link in enumerate(self.links):
            joint = link.joint
            while joint != -1:
                mask[k, joint] = True
                joint = self.finger_joints[joint - WRIST_DOFS].parent
        return mask

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)

    def forward(self, q: np.ndarray) -> Kinematics:
        """Forward kinematics for joint vectors of shape (..., J)."""
        q = np.asarray(q, dtype=np.float64)
        batch = q.shape[:-1]
        wrist_position = q[..., :3]
        wrist_rotation = rotations.from_euler_xyz(q[..., 3:6])

        frame_rotations = []
        frame_origins = []
        joint_axes = []
        for index, joint in enumerate(self.finger_joints):
            if joint.parent == -1:
                parent_rotation, parent_origin = wrist_rotation, wrist_position
            else:
                parent = joint.parent - WRIST_DOFS
                parent_rotation = frame_rotations[parent]
                parent_origin = frame_origins[parent]
            origin = parent_origin + np.einsum(
                "...ij,j->...i", parent_rotation, joint.origin
            )
            axis = np.einsum("...ij,j->...i", parent_rotation, joint.axis)
            hinge = rotations.axis_angle_matrices(
                joint.axis, q[..., WRIST_DOFS + index]
            )
            frame_rotations.append(parent_rotation @ hinge)
            frame_origins.append(origin)
            joint_axes.append(axis)

        centers = []
        for link in self.links:
            if link.joint == -1:
                rotation, origin = wrist_rotation, wrist_position
            else:
                rotation = frame_rotations[link.joint - WRIST_DOFS]
                origin = frame_origins[link.joint - WRIST_DOFS]
            centers.append(origin + np.einsum("...ij,j->...i", rotation, link.offset))

        finger_count = len(self.finger_joints)
        empty = np.zeros(batch + (0, 3))
        return Kinematics(
            link_centers=np.stack(centers, axis=-2),
            wrist_rotation=wrist_rotation,
            joint_origins=np.stack(frame_origins, axis=-2) if finger_count else empty,
            joint_axes=np.stack(joint_axes, axis=-2) if finger_count else empty,
        )

    def keypoints(self, q: np.ndarray) -> np.ndarray:
        return self.forward(q).link_centers

    def jacobian(self, q: np.ndarray, kinematics: Kinematics) -> np.ndarray:
        """
        Link-centre Jacobians d(center_k)/d(q_j).

        :return: (..., K, 3, J) array.
        """
        q = np.asarray(q, dtype=np.float64)
        centers = kinematics.link_centers
        batch = q.shape[:-1]
        jac = np.zeros(batch + (self.link_count, 3, self.joint_count))
        jac[..., :, :, 0:3] = np.eye(3)
        wrist_axes = rotations.euler_xyz_axes(q[..., 3:6])
        lever = centers - q[..., None, :3]
        for column in range(3):
            axis = wrist_axes[..., None, :, column]
            jac[..., :, :, 3 + column] = np.cross(axis, lever)
        for index in range(len(self.finger_joints)):
            joint = WRIST_DOFS + index
            axis = kinematics.joint_axes[..., None, index, :]
            arm = centers - kinematics.joint_origins[..., None, index, :]
            column = np.cross(axis, arm)
            jac[..., :, :, joint] = column * self.chain_mask[:, joint, None]
        return jac

    @classmethod
    def from_dict(cls, dct: dict[str, Any]) -> "HandModel":
        name = dct.get("name")
        if not isinstance(name, str):
            raise AssetError("hand name must be str")
        joints = dct.get("joints")
        if not isinstance(joints, list) or len(joints) <= WRIST_DOFS:
            raise AssetError(f"hand {name}: joints must list wrist and finger joints")
        links = dct.get("links")
        if not isinstance(links, list):
            raise AssetError(f"hand {name}: links must be a list")
        finger_joints = tuple(
            FingerJoint(
                parent=int(joint.get("parent", -1)),
                origin=_vector(f"hand {name}: joint origin", joint.get("origin")),
                axis=_vector(f"hand {name}: joint axis", joint.get("axis")),
            )
            for joint in joints[WRIST_DOFS:]
        )

        def column(key: str) -> np.ndarray:
            try:
                return np.array([float(joint[key]) for joint in joints])
            except (KeyError, TypeError, ValueError):
                raise AssetError(f"hand {name}: every joint needs numeric {key}")

        return cls(
            name=name,
            joint_names=tuple(str(joint.get("name", "")) for joint in joints),
            lower=column("lower"),
            upper=column("upper"),
            kp=column("kp"),
            kd=column("kd"),
            armature=column("armature"),
            finger_joints=finger_joints,
            links=tuple(
                LinkModel(
                    name=str(link.get("name", "")),
                    joint=int(link.get("joint", -1)),
                    offset=_vector(f"hand {name}: link offset", link.get("offset")),
                    radius=float(link.get("radius", 0.0)),
                )
                for link in links
            ),
        )

    def to_dict(self) -> dict[str, Any]:
        joints = []
        for index, joint_name in enumerate(self.joint_names):
            entry: dict[str, Any] = {
                "name": joint_name,
                "lower": float(self.lower[index]),
                "upper": float(self.upper[index]),
                "kp": float(self.kp[index]),
                "kd": float(self.kd[index]),
                "armature": float(self.armature[index]),
            }
            if index >= WRIST_DOFS:
                finger = self.finger_joints[index - WRIST_DOFS]
                entry["parent"] = finger.parent
                entry["origin"] = finger.origin.tolist()
                entry["axis"] = finger.axis.tolist()
            joints.append(entry)
        links = [
            {
                "name": link.name,
                "joint": link.joint,
                "offset": link.offset.tolist(),
                "radius": link.radius,
            }
            for link in self.links
        ]
        return {"name": self.name, "joints": joints, "links": links}


def box_with_lid() -> ObjectModel:
    """Builtin box with a hinged lid, about 20 x 15 x 10 cm."""
    base_half = np.array([0.10, 0.075, 0.04])
    lid_half = np.array([0.10, 0.075, 0.01])
    base_mass, lid_mass = 1.0, 0.2
    return ObjectModel(
        object_id="box-with-lid",
        parts=(
            PartModel(
                name="base",
                mass=base_mass,
                inertia=_box_inertia(base_mass, base_half),
                half_extents=base_half,
                offset=np.zeros(3),
                surface_points=box_surface_points(base_half, 0.01),
            ),
            PartModel(
                name="lid",
                mass=lid_mass,
                inertia=_box_inertia(lid_mass, lid_half),
                half_extents=lid_half,
                offset=np.array([0.0, 0.0, 0.05]),
                surface_points=box_surface_points(lid_half, 0.01),
            ),
        ),
        # Hinged along the -x edge of the top face; positive angles lift the
        # +x edge of the lid.
        joint_axis=np.array([0.0, -1.0, 0.0]),
        joint_anchor=np.array([-0.10, 0.0, 0.04]),
        joint_limits=(0.0, 1.6),
    )


def _box_inertia(mass: float, half: np.ndarray) -> np.ndarray:
    size = 2.0 * half
    return mass / 12.0 * np.array(
        [
            size[1] ** 2 + size[2] ** 2,
            size[0] ** 2 + size[2] ** 2,
            size[0] ** 2 + size[1] ** 2,
        ]
    )


def toy_hand() -> HandModel:
    """
    Builtin 8-DoF hand: floating wrist, one finger, one thumb.

    The palm faces the local -z direction, the finger extends along local +x
    and the thumb along local +y; both curl toward the palm side.
    """
    two_pi = 2.0 * np.pi
    lower = np.array([-1.0, -1.0, -0.5, -two_pi, -two_pi, -two_pi, 0.0, 0.0])
    upper = np.array([1.0, 1.0, 1.5, two_pi, two_pi, two_pi, 1.2, 1.2])
    kp = np.array([2000.0, 2000.0, 2000.0, 50.0, 50.0, 50.0, 5.0, 5.0])
    armature = np.array([1.0, 1.0, 1.0, 0.05, 0.05, 0.05, 0.01, 0.01])
    return HandModel(
        name="toy-hand",
        joint_names=(
            "wrist_x",
            "wrist_y",
            "wrist_z",
            "wrist_rx",
            "wrist_ry",
            "wrist_rz",
            "finger_flex",
            "thumb_flex",
        ),
        lower=lower,
        upper=upper,
        kp=kp,
        kd=2.0 * np.sqrt(kp * armature),
        armature=armature,
        finger_joints=(
            FingerJoint(
                parent=-1, origin=np.array([0.04, 0.0, 0.0]), axis=np.array([0, 1.0, 0])
            ),
            FingerJoint(
                parent=-1,
                origin=np.array([0.0, 0.03, 0.0]),
                axis=np.array([-1.0, 0, 0]),
            ),
        ),
        links=(
            LinkModel("palm", -1, np.zeros(3), 0.025),
            LinkModel("finger_mid", 6, np.array([0.03, 0.0, 0.0]), 0.012),
            LinkModel("finger_tip", 6, np.array([0.06, 0.0, 0.0]), 0.01),
            LinkModel("thumb_tip", 7, np.array([0.0, 0.05, 0.0]), 0.01),
        ),
    )


BUILTIN_OBJECTS = {"box-with-lid": box_with_lid}
BUILTIN_HANDS = {"toy-hand": toy_hand}


def _load_json(path: pathlib.Path) -> dict[str, Any]:
    try:
        with path.open() as asset_file:
            data = json.load(asset_file)
    except json.JSONDecodeError as err:
        raise AssetError(f"{path}: invalid JSON: {err.msg}")
    if not isinstance(data, dict):
        raise AssetError(f"{path}: asset must be a JSON object")
    return data


def load_object(ref: Union[str, pathlib.Path]) -> ObjectModel:
    """Load an object asset from a JSON path or a ``builtin:<name>`` reference."""
    ref = str(ref)
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX) :]
        if name not in BUILTIN_OBJECTS:
            raise AssetError(f"unknown builtin object: {name}")
        return BUILTIN_OBJECTS[name]()
    return ObjectModel.from_dict(_load_json(pathlib.Path(ref)))


def load_hand(ref: Union[str, pathlib.Path]) -> HandModel:
    """Load a hand asset from a JSON path or a ``builtin:<name>`` reference."""
    ref = str(ref)
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX) :]
        if name not in BUILTIN_HANDS:
            raise AssetError(f"unknown builtin hand: {name}")
        return BUILTIN_HANDS[name]()
    return HandModel.from_dict(_load_json(pathlib.Path(ref)))
