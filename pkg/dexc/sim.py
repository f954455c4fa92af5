# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import dataclasses
from typing import NamedTuple
from typing import Optional

import numpy as np

from dexc import assets
from dexc import config
from dexc import demo
from dexc import rotations

"""
Batched articulated-object simulator.

Every state array has a leading environment axis. Hand arrays then carry a
hand axis (left, right), contact arrays a part axis and a link axis.

One control step is split into sub-steps. Each sub-step evaluates penalty
contacts (hand spheres against part boxes, part corners against the table)
explicitly and integrates the PD-driven degrees of freedom (hand joints and
the virtual object controller) with backward Euler, so large gains stay
stable.
"""

TINY = 1e-12
HAND_COUNT = 2


class SimulationError(Exception):
    """Raised when the simulation state becomes invalid."""


@dataclasses.dataclass(frozen=True)
class VirtualGains:
    """
    Virtual object controller gains.

    `kp` is N/m and `kv` N*s/m for the base translation; rotation and
    articulation use the same values scaled by the simulator's rotation
    gain ratio.
    """

    kp: float = 0.0
    kv: float = 0.0

    def __post_init__(self):
        if self.kp < 0.0 or self.kv < 0.0:
            raise SimulationError("virtual gains must not be negative")

    @property
    def is_zero(self) -> bool:
        return self.kp == 0.0 and self.kv == 0.0

    @classmethod
    def critical(cls, kp: float, inertia: float) -> "VirtualGains":
        return cls(kp=kp, kv=critical_damping(kp, inertia))


ZERO_GAINS = VirtualGains()


def critical_damping(kp: float, inertia: float) -> float:
    """Damping giving a critically damped second-order response, 2*sqrt(kp*m)."""
    if inertia <= 0.0:
        raise SimulationError("inertia must be positive")
    if kp < 0.0:
        raise SimulationError("kp must not be negative")
    return 2.0 * float(np.sqrt(kp * inertia))


@dataclasses.dataclass(frozen=True, eq=False)
class SimState:
    """
    Full simulator state for a batch of environments.

    Shapes use B environments, H=2 hands, J joints, N=2 parts, K links.
    Angular velocity is expressed in the world frame.
    """

    position: np.ndarray  # (B, 3)
    rotation: np.ndarray  # (B, 4) wxyz
    linear_velocity: np.ndarray  # (B, 3)
    angular_velocity: np.ndarray  # (B, 3)
    joint_angle: np.ndarray  # (B,)
    joint_velocity: np.ndarray  # (B,)
    hand_q: np.ndarray  # (B, H, J)
    hand_qd: np.ndarray  # (B, H, J)
    link_spring: np.ndarray  # (B, H, N, K, 3) tangential contact springs
    table_spring: np.ndarray  # (B, N, 8, 3)
    contact_flags: np.ndarray  # (B, H, N, K) bool
    contact_positions: np.ndarray  # (B, H, N, K, 3), zero where no contact
    contact_forces: np.ndarray  # (B, H, N, K) normal force magnitude
    time: np.ndarray  # (B,)
    steps: np.ndarray  # (B,) int
    clamped: np.ndarray  # (B,) bool, a velocity limit engaged in the last step

    @property
    def n_envs(self) -> int:
        return len(self.position)

    def object_rows(self) -> np.ndarray:
        """(B, 8) rows of position, quaternion and joint angle."""
        return np.concatenate(
            [self.position, self.rotation, self.joint_angle[:, None]], axis=1
        )

    def replace(self, **changes) -> "SimState":
        return dataclasses.replace(self, **changes)

    def select(self, mask: np.ndarray, other: "SimState") -> "SimState":
        """Take environments where `mask` is True from `other`, the rest from self."""
        fields = {}
        for field in dataclasses.fields(self):
            mine = getattr(self, field.name)
            theirs = getattr(other, field.name)
            shape = (len(mask),) + (1,) * (mine.ndim - 1)
            fields[field.name] = np.where(mask.reshape(shape), theirs, mine)
        return SimState(**fields)


class Wrench(NamedTuple):
    force: np.ndarray  # (B, 3)
    torque: np.ndarray  # (B, 3)
    articulation: np.ndarray  # (B,)


class Contacts(NamedTuple):
    """Hand contact evaluation for one sub-step."""

    active: np.ndarray  # (B, H, N, K)
    points: np.ndarray  # (B, H, N, K, 3) contact point on the part surface
    normal_force: np.ndarray  # (B, H, N, K)
    link_forces: np.ndarray  # (B, H, N, K, 3) force on each hand link
    spring: np.ndarray  # updated tangential springs


class Geometry(NamedTuple):
    """Sphere-versus-box queries, per (env, hand, part, link)."""

    signed_distance: np.ndarray  # centre to box surface, negative inside
    normals: np.ndarray  # world, from the box toward the sphere centre
    points: np.ndarray  # world, closest point on the box surface


def _as_targets(object_target, n_envs: int) -> np.ndarray:
    if isinstance(object_target, demo.ObjectState):
        object_target = object_target.to_row()
    return np.broadcast_to(np.asarray(object_target, dtype=np.float64), (n_envs, 8))


class Simulator:
    """
    Simulator for one object and one hand model used for both hands.

    `gravity` and `friction` start from the configuration and may be changed
    between steps.
    """

    def __init__(
        self,
        obj: assets.ObjectModel,
        hand: assets.HandModel,
        params: config.SimConfig,
        dt: float,
    ):
        if dt <= 0.0:
            raise SimulationError("dt must be positive")
        self.object = obj
        self.hand = hand
        self.params = params
        self.dt = dt
        self.gravity = np.array(params.gravity, dtype=np.float64)
        self.friction = params.friction
        self.hand_gain_scale = 1.0
        self._half_extents = np.stack([part.half_extents for part in obj.parts])
        self._corners = np.stack([part.corners for part in obj.parts])
        self._masses = np.array([part.mass for part in obj.parts])

    @property
    def substep_dt(self) -> float:
        return self.dt / self.params.substeps

    def rotation_gains(self, gains: VirtualGains) -> tuple[float, float]:
        ratio = self.params.rotation_gain_ratio
        return gains.kp * ratio, gains.kv * ratio

    def reset(
        self,
        clip: demo.DemoClip,
        t0: int = 0,
        hand_joints: Optional[np.ndarray] = None,
        n_envs: int = 1,
    ) -> SimState:
        """
        State at frame `t0`: object at its target, hands at `hand_joints[:, t0]`.

        :param hand_joints: (2, T, J) joint trajectory, by default the clip's
            reference joints. Training passes the replayed (achieved) joints.
        """
        if not 0 <= t0 < clip.frames:
            raise SimulationError(f"reset frame {t0} outside [0, {clip.frames})")
        if hand_joints is None:
            hand_joints = clip.hand_joints
        if hand_joints.shape[-1] != self.hand.joint_count:
            raise SimulationError(
                f"hand has {self.hand.joint_count} joints, "
                f"clip has {hand_joints.shape[-1]}"
            )
        row = clip.object_targets[t0]
        q = np.broadcast_to(
            hand_joints[:, t0], (n_envs, HAND_COUNT, hand_joints.shape[-1])
        )
        return self.make_state(
            position=np.tile(row[0:3], (n_envs, 1)),
            rotation=np.tile(rotations.normalize(row[3:7]), (n_envs, 1)),
            joint_angle=np.full(n_envs, row[7]),
            hand_q=self.hand.clamp(q),
        )

    def make_state(
        self,
        position: np.ndarray,
        rotation: np.ndarray,
        joint_angle: np.ndarray,
        hand_q: np.ndarray,
    ) -> SimState:
        """At-rest state with no contacts for the given configuration."""
        n_envs = len(position)
        links = self.hand.link_count
        parts = assets.PART_COUNT
        return SimState(
            position=np.array(position, dtype=np.float64),
            rotation=np.array(rotation, dtype=np.float64),
            linear_velocity=np.zeros((n_envs, 3)),
            angular_velocity=np.zeros((n_envs, 3)),
            joint_angle=np.array(joint_angle, dtype=np.float64),
            joint_velocity=np.zeros(n_envs),
            hand_q=np.array(hand_q, dtype=np.float64),
            hand_qd=np.zeros_like(hand_q, dtype=np.float64),
            link_spring=np.zeros((n_envs, HAND_COUNT, parts, links, 3)),
            table_spring=np.zeros((n_envs, parts, 8, 3)),
            contact_flags=np.zeros((n_envs, HAND_COUNT, parts, links), dtype=bool),
            contact_positions=np.zeros((n_envs, HAND_COUNT, parts, links, 3)),
            contact_forces=np.zeros((n_envs, HAND_COUNT, parts, links)),
            time=np.zeros(n_envs),
            steps=np.zeros(n_envs, dtype=np.int64),
            clamped=np.zeros(n_envs, dtype=bool),
        )

    def virtual_wrench(
        self, state: SimState, target, gains: VirtualGains
    ) -> Wrench:
        """
        Per-DoF PD wrench of the virtual object controller.

        The rotation error is the axis-angle vector of target * current^-1 with
        angle in [0, pi], so both signs of the target quaternion agree.
        """
        target = _as_targets(target, state.n_envs)
        kp_rot, kv_rot = self.rotation_gains(gains)
        force = gains.kp * (target[:, 0:3] - state.position) - gains.kv * (
            state.linear_velocity
        )
        error = rotations.error_rotvec(
            rotations.normalize(target[:, 3:7]), state.rotation
        )
        torque = kp_rot * error - kv_rot * state.angular_velocity
        articulation = kp_rot * (target[:, 7] - state.joint_angle) - kv_rot * (
            state.joint_velocity
        )
        return Wrench(force, torque, articulation)

    def link_geometry(
        self,
        link_centers: np.ndarray,
        part_rotations: np.ndarray,
        part_centers: np.ndarray,
    ) -> Geometry:
        """
        Closest-point queries of link centres against every part box.

        :param link_centers: (B, H, K, 3).
        :param part_rotations: (B, N, 3, 3).
        :param part_centers: (B, N, 3).
        """
        diff = link_centers[:, :, None, :, :] - part_centers[:, None, :, None, :]
        local = np.einsum("bnji,bhnkj->bhnki", part_rotations, diff)
        half = self._half_extents[None, None, :, None, :]

        magnitude = np.abs(local)
        inside = np.all(magnitude < half, axis=-1)
        face_depth = half - magnitude
        face_axis = np.argmin(face_depth, axis=-1)
        face_one_hot = np.eye(3, dtype=bool)[face_axis]
        sign = np.where(local >= 0.0, 1.0, -1.0)
        face_normal = np.where(face_one_hot, sign, 0.0)
        face_point = np.where(face_one_hot, sign * half, local)

        clamped = np.clip(local, -half, half)
        delta = local - clamped
        distance = np.linalg.norm(delta, axis=-1)
        outward = delta / np.maximum(distance, TINY)[..., None]
        outward = np.where((distance > TINY)[..., None], outward, face_normal)

        signed = np.where(inside, -np.min(face_depth, axis=-1), distance)
        normal_local = np.where(inside[..., None], face_normal, outward)
        point_local = np.where(inside[..., None], face_point, clamped)
        normals = np.einsum("bnij,bhnkj->bhnki", part_rotations, normal_local)
        points = (
            np.einsum("bnij,bhnkj->bhnki", part_rotations, point_local)
            + part_centers[:, None, :, None, :]
        )
        return Geometry(signed, normals, points)

    def finger_object_distances(self, state: SimState) -> np.ndarray:
        """
        Per hand and link, sphere surface to nearest part surface distance.

        :return: (B, H, K), negative while penetrating.
        """
        poses = self.object.part_poses(
            state.position, state.rotation, state.joint_angle
        )
        kinematics = self.hand.forward(state.hand_q)
        geometry = self.link_geometry(
            kinematics.link_centers, poses.rotations, poses.centers
        )
        gaps = geometry.signed_distance - self.hand.link_radii
        return np.min(gaps, axis=2)

    def _point_velocity(
        self,
        state: SimState,
        points: np.ndarray,
        part_axis: int,
        axis_world: np.ndarray,
        anchor_world: np.ndarray,
    ) -> np.ndarray:
        """
        Velocity of object material points.

        `points` has the environment axis first and the part axis at position
        `part_axis`; extra axes are broadcast.
        """
        extra = points.ndim - 2

        def expand(array: np.ndarray) -> np.ndarray:
            return array.reshape(array.shape[:1] + (1,) * extra + array.shape[1:])

        velocity = expand(state.linear_velocity) + np.cross(
            expand(state.angular_velocity), points - expand(state.position)
        )
        hinge = np.cross(expand(axis_world), points - expand(anchor_world))
        hinge = hinge * expand(state.joint_velocity[:, None])
        is_lid = np.zeros(points.shape[:-1] + (1,), dtype=bool)
        index = [slice(None)] * (points.ndim - 1) + [slice(None)]
        index[part_axis] = slice(1, 2)
        is_lid[tuple(index)] = True
        return velocity + np.where(is_lid, hinge, 0.0)

    def _friction(
        self,
        spring: np.ndarray,
        active: np.ndarray,
        normal: np.ndarray,
        normal_force: np.ndarray,
        tangential_velocity: np.ndarray,
        h: float,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Spring-dashpot tangential force with a Coulomb cap, and the new spring."""
        stiffness = self.params.tangential_stiffness
        spring = np.where(active[..., None], spring + tangential_velocity * h, 0.0)
        spring = spring - np.sum(spring * normal, axis=-1, keepdims=True) * normal
        damping = self.params.tangential_damping
        force = -stiffness * spring - damping * tangential_velocity
        magnitude = np.linalg.norm(force, axis=-1)
        cap = self.friction * normal_force
        slipping = magnitude > cap
        scale = np.where(slipping, cap / np.maximum(magnitude, TINY), 1.0)
        force = force * scale[..., None]
        spring = np.where(slipping[..., None], -force / stiffness, spring)
        force = np.where(active[..., None], force, 0.0)
        return force, spring

    def hand_contacts(
        self,
        state: SimState,
        link_centers: np.ndarray,
        link_velocities: np.ndarray,
        poses: assets.PartPoses,
        axis_world: np.ndarray,
        anchor_world: np.ndarray,
    ) -> Contacts:
        h = self.substep_dt
        geometry = self.link_geometry(link_centers, poses.rotations, poses.centers)
        depth = self.hand.link_radii[None, None, None, :] - geometry.signed_distance
        active = depth > 0.0

        object_velocity = self._point_velocity(
            state, geometry.points, 2, axis_world, anchor_world
        )
        relative = link_velocities[:, :, None, :, :] - object_velocity
        normal_speed = np.sum(relative * geometry.normals, axis=-1)
        normal_force = np.where(
            active,
            np.maximum(
                self.params.contact_stiffness * depth
                - self.params.contact_damping * normal_speed,
                0.0,
            ),
            0.0,
        )
        tangential = relative - normal_speed[..., None] * geometry.normals
        friction, spring = self._friction(
            state.link_spring, active, geometry.normals, normal_force, tangential, h
        )
        forces = normal_force[..., None] * geometry.normals + friction
        return Contacts(
            active=active,
            points=geometry.points,
            normal_force=normal_force,
            link_forces=forces,
            spring=spring,
        )

    def table_contacts(
        self,
        state: SimState,
        poses: assets.PartPoses,
        axis_world: np.ndarray,
        anchor_world: np.ndarray,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Forces on the part corners from the table: (points, forces, spring)."""
        corners = (
            np.einsum("bnij,ncj->bnci", poses.rotations, self._corners)
            + poses.centers[:, :, None, :]
        )
        if not self.params.table:
            return corners, np.zeros_like(corners), np.zeros_like(corners)
        depth = self.params.table_height - corners[..., 2]
        active = depth > 0.0
        velocity = self._point_velocity(state, corners, 1, axis_world, anchor_world)
        up = np.array([0.0, 0.0, 1.0])
        normal_speed = velocity[..., 2]
        normal_force = np.where(
            active,
            np.maximum(
                self.params.table_stiffness * depth
                - self.params.table_damping * normal_speed,
                0.0,
            ),
            0.0,
        )
        tangential = velocity * np.array([1.0, 1.0, 0.0])
        friction, spring = self._friction(
            state.table_spring,
            active,
            np.broadcast_to(up, corners.shape),
            normal_force,
            tangential,
            self.substep_dt,
        )
        return corners, normal_force[..., None] * up + friction, spring

    def step(
        self,
        state: SimState,
        joint_targets: np.ndarray,
        object_target,
        gains: VirtualGains,
        pinned: bool = False,
        substeps: Optional[int] = None,
    ) -> SimState:
        """
        Advance one control step.

        :param joint_targets: (B, 2, J) or broadcastable PD targets, clamped
            to the joint limits.
        :param object_target: `ObjectState` or (B, 8) rows for the virtual
            controller.
        :param gains: Virtual controller gains.
        :param pinned: Hold the object exactly at `object_target` instead of
            simulating it.
        :param substeps: Override the configured number of sub-steps; the
            sub-step length is unchanged.
        :raises SimulationError: If the new state is not finite.
        """
        n_envs = state.n_envs
        joint_targets = self.hand.clamp(
            np.broadcast_to(
                np.asarray(joint_targets, dtype=np.float64),
                (n_envs, HAND_COUNT, self.hand.joint_count),
            )
        )
        target = np.array(_as_targets(object_target, n_envs))
        target[:, 3:7] = rotations.normalize(target[:, 3:7])
        if pinned:
            state = state.replace(
                position=target[:, 0:3].copy(),
                rotation=target[:, 3:7].copy(),
                joint_angle=target[:, 7].copy(),
                linear_velocity=np.zeros((n_envs, 3)),
                angular_velocity=np.zeros((n_envs, 3)),
                joint_velocity=np.zeros(n_envs),
            )
        count = self.params.substeps if substeps is None else substeps
        clamped = np.zeros(n_envs, dtype=bool)
        for _ in range(count):
            state, hit = self._substep(state, joint_targets, target, gains, pinned)
            clamped |= hit
        self._check_finite(state)
        return state.replace(
            time=state.time + count * self.substep_dt,
            steps=state.steps + 1,
            clamped=clamped,
        )

    def _substep(
        self,
        state: SimState,
        joint_targets: np.ndarray,
        target: np.ndarray,
        gains: VirtualGains,
        pinned: bool,
    ) -> tuple[SimState, np.ndarray]:
        h = self.substep_dt
        obj = self.object
        limit = self.params.velocity_limit

        poses = obj.part_poses(state.position, state.rotation, state.joint_angle)
        base_rotation = poses.rotations[:, 0]
        axis_world = base_rotation @ obj.joint_axis
        anchor_world = state.position + base_rotation @ obj.joint_anchor

        kinematics = self.hand.forward(state.hand_q)
        jacobian = self.hand.jacobian(state.hand_q, kinematics)
        link_velocities = np.einsum("bhkij,bhj->bhki", jacobian, state.hand_qd)
        contacts = self.hand_contacts(
            state,
            kinematics.link_centers,
            link_velocities,
            poses,
            axis_world,
            anchor_world,
        )

        # Hands: implicit PD plus contact generalized forces. Scaling kd by the
        # square root keeps the damping ratio of softened gains.
        scale = self.hand_gain_scale
        kp = self.hand.kp * scale
        kd = self.hand.kd * np.sqrt(scale)
        armature = self.hand.armature
        generalized = np.einsum("bhkij,bhnki->bhj", jacobian, contacts.link_forces)
        hand_qd = (
            armature * state.hand_qd
            + h * (generalized + kp * (joint_targets - state.hand_q))
        ) / (armature + h * kd + h * h * kp)
        hand_qd, hit = self._limit_velocity(hand_qd, limit)
        hand_q = state.hand_q + h * hand_qd
        at_limit = (hand_q < self.hand.lower) | (hand_q > self.hand.upper)
        hand_q = self.hand.clamp(hand_q)
        hand_qd = np.where(at_limit, 0.0, hand_qd)
        hit = np.any(hit, axis=(1, 2))

        table_points, table_forces, table_spring = self.table_contacts(
            state, poses, axis_world, anchor_world
        )
        if pinned:
            updated = state.replace(
                hand_q=hand_q,
                hand_qd=hand_qd,
                link_spring=contacts.spring,
                table_spring=np.zeros_like(state.table_spring),
            )
        else:
            updated, object_hit = self._integrate_object(
                state,
                target,
                gains,
                poses,
                axis_world,
                anchor_world,
                contacts,
                table_points,
                table_forces,
            )
            updated = updated.replace(
                hand_q=hand_q,
                hand_qd=hand_qd,
                link_spring=contacts.spring,
                table_spring=table_spring,
            )
            hit = hit | object_hit
        updated = updated.replace(
            contact_flags=contacts.active,
            contact_positions=np.where(
                contacts.active[..., None], contacts.points, 0.0
            ),
            contact_forces=contacts.normal_force,
        )
        return updated, hit

    def _integrate_object(
        self,
        state: SimState,
        target: np.ndarray,
        gains: VirtualGains,
        poses: assets.PartPoses,
        axis_world: np.ndarray,
        anchor_world: np.ndarray,
        contacts: Contacts,
        table_points: np.ndarray,
        table_forces: np.ndarray,
    ) -> tuple[SimState, np.ndarray]:
        h = self.substep_dt
        obj = self.object
        limit = self.params.velocity_limit
        n_envs = state.n_envs

        # External loads: hand reactions, table, gravity on each part.
        hand_forces = -contacts.link_forces
        part_weights = self._masses[:, None] * self.gravity
        origin = state.position
        force = (
            hand_forces.sum(axis=(1, 2, 3))
            + table_forces.sum(axis=(1, 2))
            + part_weights.sum(axis=0)
        )
        torque = (
            np.cross(contacts.points - origin[:, None, None, None, :], hand_forces).sum(
                axis=(1, 2, 3)
            )
            + np.cross(table_points - origin[:, None, None, :], table_forces).sum(
                axis=(1, 2)
            )
            + np.cross(poses.centers - origin[:, None, :], part_weights).sum(axis=1)
        )
        lever_axis = axis_world[:, None, None, :]
        hinge_torque = (
            np.sum(
                np.cross(
                    lever_axis, contacts.points[:, :, 1] - anchor_world[:, None, None]
                )
                * hand_forces[:, :, 1],
                axis=(-1, -2, -3),
            )
            + np.sum(
                np.cross(
                    axis_world[:, None, :], table_points[:, 1] - anchor_world[:, None]
                )
                * table_forces[:, 1],
                axis=(-1, -2),
            )
            + np.sum(
                np.cross(axis_world, poses.centers[:, 1] - anchor_world)
                * part_weights[1],
                axis=-1,
            )
        )

        kp, kv = gains.kp, gains.kv
        kp_rot, kv_rot = self.rotation_gains(gains)
        if self.params.force_cap > 0.0:
            wrench = self._capped_wrench(state, target, gains)
            force = force + wrench.force
            torque = torque + wrench.torque
            hinge_torque = hinge_torque + wrench.articulation
            kp = kv = kp_rot = kv_rot = 0.0

        # Base translation.
        mass = obj.total_mass
        velocity = (
            mass * state.linear_velocity + h * (force + kp * (target[:, 0:3] - origin))
        ) / (mass + h * kv + h * h * kp)

        # Base rotation, per principal axis in the body frame.
        rotation_matrix = rotations.matrices(state.rotation)
        error = rotations.error_rotvec(target[:, 3:7], state.rotation)
        to_body = np.swapaxes(rotation_matrix, -1, -2)
        inertia = obj.base_inertia
        omega_body = np.einsum("bij,bj->bi", to_body, state.angular_velocity)
        torque_body = np.einsum("bij,bj->bi", to_body, torque)
        error_body = np.einsum("bij,bj->bi", to_body, error)
        omega_body = (
            inertia * omega_body + h * (torque_body + kp_rot * error_body)
        ) / (inertia + h * kv_rot + h * h * kp_rot)
        omega = np.einsum("bij,bj->bi", rotation_matrix, omega_body)

        # Articulation.
        joint_inertia = obj.joint_inertia
        joint_velocity = (
            joint_inertia * state.joint_velocity
            + h * (hinge_torque + kp_rot * (target[:, 7] - state.joint_angle))
        ) / (joint_inertia + h * (kv_rot + obj.joint_damping) + h * h * kp_rot)

        velocity, hit_linear = self._limit_velocity(velocity, limit)
        omega, hit_angular = self._limit_velocity(omega, limit)
        joint_velocity, hit_joint = self._limit_velocity(joint_velocity, limit)

        lower, upper = obj.joint_limits
        joint_angle = state.joint_angle + h * joint_velocity
        outside = (joint_angle < lower) | (joint_angle > upper)
        joint_angle = np.clip(joint_angle, lower, upper)
        joint_velocity = np.where(outside, 0.0, joint_velocity)

        hit = (
            np.any(hit_linear.reshape(n_envs, -1), axis=1)
            | np.any(hit_angular.reshape(n_envs, -1), axis=1)
            | hit_joint
        )
        return (
            state.replace(
                position=origin + h * velocity,
                rotation=rotations.integrate(state.rotation, omega, h),
                linear_velocity=velocity,
                angular_velocity=omega,
                joint_angle=joint_angle,
                joint_velocity=joint_velocity,
            ),
            hit,
        )

    def _capped_wrench(
        self, state: SimState, target: np.ndarray, gains: VirtualGains
    ) -> Wrench:
        cap = self.params.force_cap
        wrench = self.virtual_wrench(state, target, gains)

        def limit(vectors: np.ndarray) -> np.ndarray:
            norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
            return vectors * np.minimum(1.0, cap / np.maximum(norms, TINY))

        return Wrench(
            limit(wrench.force),
            limit(wrench.torque),
            np.clip(wrench.articulation, -cap, cap),
        )

    @staticmethod
    def _limit_velocity(
        values: np.ndarray, limit: float
    ) -> tuple[np.ndarray, np.ndarray]:
        hit = np.abs(values) > limit
        return np.clip(values, -limit, limit), hit

    @staticmethod
    def _check_finite(state: SimState) -> None:
        for field in dataclasses.fields(state):
            value = getattr(state, field.name)
            if value.dtype.kind == "f" and not np.all(np.isfinite(value)):
                env = int(np.argwhere(~np.isfinite(value))[0][0])
                raise SimulationError(f"non-finite {field.name} in environment {env}")
