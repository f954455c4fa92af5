# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import numpy as np
from scipy.spatial.transform import Rotation

"""
Quaternion helpers.

Quaternions are stored scalar-first, (w, x, y, z), everywhere in dexc. The
rotation algebra itself is delegated to `scipy.spatial.transform.Rotation`,
which stores them scalar-last; these helpers do the conversion and keep the
leading batch shape of the inputs.
"""

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def wxyz_to_xyzw(quat: np.ndarray) -> np.ndarray:
    quat = np.asarray(quat, dtype=np.float64)
    return np.concatenate([quat[..., 1:], quat[..., :1]], axis=-1)


def xyzw_to_wxyz(quat: np.ndarray) -> np.ndarray:
    quat = np.asarray(quat, dtype=np.float64)
    return np.concatenate([quat[..., -1:], quat[..., :-1]], axis=-1)


def to_rotation(quat: np.ndarray) -> Rotation:
    """Flatten a (..., 4) wxyz array into a scipy `Rotation` stack."""
    quat = np.asarray(quat, dtype=np.float64)
    return Rotation.from_quat(wxyz_to_xyzw(quat).reshape(-1, 4))


def from_rotation(rotation: Rotation, batch_shape: tuple[int, ...]) -> np.ndarray:
    return xyzw_to_wxyz(rotation.as_quat()).reshape(batch_shape + (4,))


def norms(quat: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(quat, dtype=np.float64), axis=-1)


def normalize(quat: np.ndarray) -> np.ndarray:
    quat = np.asarray(quat, dtype=np.float64)
    return quat / norms(quat)[..., None]


def canonicalize_sequence(quats: np.ndarray) -> np.ndarray:
    """
    Remove sign flips from a quaternion sequence.

    Forces w >= 0 on the first element, then flips every following
    quaternion onto the hemisphere of its predecessor.

    :param quats: (T, 4) array.
    :return: New (T, 4) array describing the same rotations.
    """
    out = np.array(quats, dtype=np.float64, copy=True)
    if len(out) == 0:
        return out
    if out[0, 0] < 0.0:
        out[0] = -out[0]
    for index in range(1, len(out)):
        if np.dot(out[index - 1], out[index]) < 0.0:
            out[index] = -out[index]
    return out


def matrices(quat: np.ndarray) -> np.ndarray:
    quat = np.asarray(quat, dtype=np.float64)
    return to_rotation(quat).as_matrix().reshape(quat.shape[:-1] + (3, 3))


def rotate(quat: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Rotate (..., 3) vectors by (..., 4) quaternions (shapes must agree)."""
    return np.einsum("...ij,...j->...i", matrices(quat), vectors)


def error_rotvec(target: np.ndarray, current: np.ndarray) -> np.ndarray:
    """
    Axis-angle vector of `target * current^-1`.

    The angle of the returned vector lies in [0, pi], so `q` and `-q` targets
    give the same error.
    """
    target = np.asarray(target, dtype=np.float64)
    batch_shape = np.broadcast_shapes(target.shape, np.shape(current))[:-1]
    target = np.broadcast_to(target, batch_shape + (4,))
    current = np.broadcast_to(np.asarray(current, dtype=np.float64), target.shape)
    delta = to_rotation(target) * to_rotation(current).inv()
    return delta.as_rotvec().reshape(batch_shape + (3,))


def integrate(quat: np.ndarray, angular_velocity: np.ndarray, dt: float) -> np.ndarray:
    """Advance orientations by a world-frame angular velocity held for `dt`."""
    quat = np.asarray(quat, dtype=np.float64)
    step = Rotation.from_rotvec(np.asarray(angular_velocity).reshape(-1, 3) * dt)
    advanced = from_rotation(step * to_rotation(quat), quat.shape[:-1])
    return normalize(advanced)


def compose(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Quaternion product `first * second` (apply `second`, then `first`)."""
    first = np.asarray(first, dtype=np.float64)
    return from_rotation(to_rotation(first) * to_rotation(second), first.shape[:-1])


def from_euler_xyz(angles: np.ndarray) -> np.ndarray:
    """Extrinsic x-y-z Euler angles to rotation matrices, R = Rz @ Ry @ Rx."""
    angles = np.asarray(angles, dtype=np.float64)
    rotation = Rotation.from_euler("xyz", angles.reshape(-1, 3))
    return rotation.as_matrix().reshape(angles.shape[:-1] + (3, 3))


def euler_xyz_axes(angles: np.ndarray) -> np.ndarray:
    """
    World-frame rotation axes of the three extrinsic Euler coordinates.

    The angular velocity produced by Euler rates (a', b', c') is
    `axes[..., :, 0] * a' + axes[..., :, 1] * b' + axes[..., :, 2] * c'`.

    :return: (..., 3, 3) array, one axis per column.
    """
    angles = np.asarray(angles, dtype=np.float64)
    b = angles[..., 1]
    c = angles[..., 2]
    zeros = np.zeros_like(b)
    axis_a = np.stack([np.cos(c) * np.cos(b), np.sin(c) * np.cos(b), -np.sin(b)], -1)
    axis_b = np.stack([-np.sin(c), np.cos(c), zeros], -1)
    axis_c = np.stack([zeros, zeros, np.ones_like(b)], -1)
    return np.stack([axis_a, axis_b, axis_c], axis=-1)


def axis_angle_matrices(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rotation matrices about a fixed unit `axis` by each of `angles`."""
    angles = np.asarray(angles, dtype=np.float64)
    rotvecs = np.asarray(axis, dtype=np.float64) * angles[..., None]
    return Rotation.from_rotvec(rotvecs.reshape(-1, 3)).as_matrix().reshape(
        angles.shape + (3, 3)
    )
