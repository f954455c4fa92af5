# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import itertools
import json
import pathlib

import numpy as np
import pytest

from dexc import config
from dexc import demo
from dexc import prep

RESTING = np.array([0.0, 0.0, 0.04, 1.0, 0.0, 0.0, 0.0, 0.0])


def static_clip(hand, left_wrist, right_wrist=(-0.8, -0.8, 1.0), frames=40):
    """Clip with the object resting and both hands holding one pose."""
    joints = np.zeros((2, frames, hand.joint_count))
    joints[0, :, :3] = left_wrist
    joints[1, :, :3] = right_wrist
    return demo.DemoClip(
        object_id="box-with-lid",
        dt=0.02,
        object_targets=np.tile(RESTING, (frames, 1)),
        hand_joints=joints,
        hand_keypoints=hand.keypoints(joints),
    )


def min_pairwise(points):
    return min(np.linalg.norm(a - b) for a, b in itertools.combinations(points, 2))


def greedy_farthest(points, n):
    chosen = [0]
    while len(chosen) < n:
        best, best_distance = None, -1.0
        for index, point in enumerate(points):
            if index in chosen:
                continue
            distance = min(np.linalg.norm(point - points[c]) for c in chosen)
            if distance > best_distance:
                best, best_distance = index, distance
        chosen.append(best)
    return chosen


def brute_force_contacts(part_points, points, link_centers, gamma, n_c):
    contacts = np.zeros((len(part_points), len(link_centers), 3))
    mask = np.zeros((len(part_points), len(link_centers)), dtype=bool)
    for part, surface in enumerate(part_points):
        marked = []
        for point in surface:
            if min(np.linalg.norm(point - hand_point) for hand_point in points) < gamma:
                marked.append(point)
        if not marked:
            continue
        marked = np.array(marked)
        if len(marked) > n_c:
            marked = marked[greedy_farthest(marked, n_c)]
        assigned = {}
        for point in marked:
            distances = [np.linalg.norm(point - center) for center in link_centers]
            assigned.setdefault(int(np.argmin(distances)), []).append(point)
        for link, owned in assigned.items():
            contacts[part, link] = np.mean(owned, axis=0)
            mask[part, link] = True
    return contacts, mask


class TestFarthestPointSubsample:
    @staticmethod
    def test_collinear():
        points = np.array([[0.0, 0, 0], [0.5, 0, 0], [1.0, 0, 0]])
        np.testing.assert_array_equal(prep.farthest_point_subsample(points, 2), [0, 2])

    @staticmethod
    def test_greedy_order():
        points = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0], [10, 0, 0]])
        np.testing.assert_array_equal(
            prep.farthest_point_subsample(points, 3), [0, 4, 3]
        )

    @staticmethod
    @pytest.mark.parametrize("n", [3, 4])
    def test_all_points(n):
        points = np.eye(3)
        indices = prep.farthest_point_subsample(points, n)
        np.testing.assert_array_equal(indices, [0, 1, 2])

    @staticmethod
    def test_duplicates():
        points = np.array([[0.0, 0, 0], [0, 0, 0], [0, 0, 0], [0, 1, 0]])
        np.testing.assert_array_equal(prep.farthest_point_subsample(points, 2), [0, 3])

    @staticmethod
    def test_more_than_distinct_points():
        points = np.array([[0.0, 0, 0], [0, 0, 0], [0, 0, 0], [1, 0, 0]])
        indices = prep.farthest_point_subsample(points, 3)
        np.testing.assert_array_equal(indices, [0, 3, 1])

    @staticmethod
    @pytest.mark.parametrize("n", [1, 2, 5, 9])
    def test_indices_are_distinct(n):
        points = np.repeat(np.eye(3), 3, axis=0)
        indices = prep.farthest_point_subsample(points, n)
        assert len(indices) == n
        assert len(set(indices.tolist())) == n

    @staticmethod
    def test_spread_beats_random_subsets():
        rng = np.random.default_rng(0)
        points = rng.random((200, 3))
        selected = prep.farthest_point_subsample(points, 50)
        assert len(selected) == 50
        assert len(set(selected.tolist())) == 50
        spread = min_pairwise(points[selected])
        for _ in range(100):
            subset = rng.choice(200, size=50, replace=False)
            assert spread >= min_pairwise(points[subset])

    @staticmethod
    def test_invalid():
        with pytest.raises(prep.PrepError, match="at least 1"):
            prep.farthest_point_subsample(np.zeros((2, 3)), 0)
        with pytest.raises(prep.PrepError, match="empty point set"):
            prep.farthest_point_subsample(np.zeros((0, 3)), 1)


def test_sphere_directions_are_unit():
    directions = prep.sphere_directions(16)
    assert directions.shape == (16, 3)
    np.testing.assert_allclose(np.linalg.norm(directions, axis=1), 1.0)


def test_hand_points():
    centers = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    points = prep.hand_points(centers, np.array([0.1, 0.2]), 4)
    assert points.shape == (2 + 2 * 4, 3)
    np.testing.assert_array_equal(points[:2], centers)
    np.testing.assert_allclose(np.linalg.norm(points[2:6] - centers[0], axis=1), 0.1)
    np.testing.assert_allclose(np.linalg.norm(points[6:] - centers[1], axis=1), 0.2)


class TestFrameContacts:
    @staticmethod
    def test_singleton():
        surface = np.stack([np.arange(10) * 0.1, np.zeros(10), np.zeros(10)], axis=1)
        far = surface + [0.0, 0.0, 5.0]
        centers = np.array([surface[5] + [0.0, 0.0, 0.01], [3.0, 3.0, 3.0]])
        contacts, mask = prep.frame_contacts(
            [surface, far], surface[5][None], centers, 0.01, 50
        )
        np.testing.assert_array_equal(mask, [[True, False], [False, False]])
        np.testing.assert_array_equal(contacts[0, 0], surface[5])
        np.testing.assert_array_equal(contacts[~mask], 0.0)

    @staticmethod
    def test_subsamples_to_n_c():
        surface = np.stack([np.linspace(0, 0.1, 200), np.zeros(200), np.zeros(200)], 1)
        contacts, mask = prep.frame_contacts(
            [surface], surface, np.zeros((1, 3)), 0.01, 7
        )
        expected = surface[prep.farthest_point_subsample(surface, 7)].mean(axis=0)
        np.testing.assert_allclose(contacts[0, 0], expected)

    @staticmethod
    def test_empty_part():
        with pytest.raises(prep.PrepError, match="part 0 has no surface points"):
            prep.frame_contacts(
                [np.zeros((0, 3))], np.zeros((1, 3)), np.zeros((1, 3)), 1.0, 1
            )

    @staticmethod
    @pytest.mark.parametrize("seed", range(200))
    def test_matches_brute_force(seed):
        rng = np.random.default_rng(seed)
        part_points = [rng.random((50, 3)) * 0.1, rng.random((30, 3)) * 0.1 + 0.05]
        points = rng.random((5, 3)) * 0.12
        centers = points[:3]
        contacts, mask = prep.frame_contacts(part_points, points, centers, 0.03, 6)
        expected_contacts, expected_mask = brute_force_contacts(
            part_points, points, centers, 0.03, 6
        )
        np.testing.assert_array_equal(mask, expected_mask)
        np.testing.assert_allclose(contacts, expected_contacts, atol=1e-9)


class TestApproximateContacts:
    @staticmethod
    def test_parked_hands(obj, hand):
        clip = static_clip(hand, (1.0, 1.0, 1.0), (-1.0, -1.0, 1.0), frames=5)
        left, right = prep.approximate_contacts(clip, obj, hand, 0.01, 50)
        for annotation in (left, right):
            assert annotation.mask.shape == (5, 2, 4)
            assert annotation.contacts.shape == (5, 2, 4, 3)
            assert not annotation.mask.any()
            np.testing.assert_array_equal(annotation.contacts, 0.0)

    @staticmethod
    def test_every_part_touched_with_large_gamma(obj, hand, clip):
        left, right = prep.approximate_contacts(clip, obj, hand, 1.0, 1)
        for annotation in (left, right):
            np.testing.assert_array_equal(annotation.mask.sum(axis=2), 1)

    @staticmethod
    def test_contacts_near_parts(obj, hand, clip):
        annotations = prep.approximate_contacts(clip, obj, hand, 1.0, 50)
        poses = obj.part_poses(clip.positions, clip.quaternions, clip.joint_angles)
        for annotation in annotations:
            for part in range(2):
                reach = np.linalg.norm(obj.parts[part].half_extents)
                offsets = annotation.contacts[:, part] - poses.centers[:, part, None]
                distances = np.linalg.norm(offsets, axis=-1)
                assert np.all(distances[annotation.mask[:, part]] <= reach + 1e-9)

    @staticmethod
    def test_default_keypoints_are_reference(obj, hand, clip):
        default = prep.approximate_contacts(clip, obj, hand, 0.02, 50)
        explicit = prep.approximate_contacts(
            clip, obj, hand, 0.02, 50, keypoints=clip.hand_keypoints
        )
        for a, b in zip(default, explicit):
            np.testing.assert_array_equal(a.mask, b.mask)
            np.testing.assert_array_equal(a.contacts, b.contacts)

    @staticmethod
    @pytest.mark.parametrize(
        "gamma, n_c, message",
        [(0.0, 50, "gamma must be positive"), (0.01, 0, "n_c must be at least 1")],
    )
    def test_invalid(obj, hand, clip, gamma, n_c, message):
        with pytest.raises(prep.PrepError, match=message):
            prep.approximate_contacts(clip, obj, hand, gamma, n_c)

    @staticmethod
    def test_keypoint_mismatch(obj, hand, clip):
        with pytest.raises(prep.PrepError, match="3 keypoints for a hand with 4 links"):
            prep.approximate_contacts(
                clip, obj, hand, 0.01, 50, keypoints=clip.hand_keypoints[:, :, :3]
            )


def test_annotation_sentinel():
    mask = np.zeros((1, 2, 4), dtype=bool)
    contacts = np.zeros((1, 2, 4, 3))
    contacts[0, 1, 2, 0] = 0.5
    with pytest.raises(prep.PrepError, match="must be zero where the mask is false"):
        prep.ContactAnnotation(contacts, mask, 0.01, 50, 0.1)


class TestReplayRetarget:
    @staticmethod
    @pytest.fixture
    def params():
        return config.PrepConfig()

    @staticmethod
    def test_shapes_and_determinism(simulator, clip, params):
        first = prep.replay_retarget(clip, simulator, params)
        second = prep.replay_retarget(clip, simulator, params)
        assert first.joints.shape == clip.hand_joints.shape
        assert first.keypoints.shape == clip.hand_keypoints.shape
        np.testing.assert_array_equal(first.joints, second.joints)
        np.testing.assert_allclose(
            first.keypoints, simulator.hand.keypoints(first.joints)
        )
        assert first.max_penetration >= 0.0
        assert simulator.hand_gain_scale == 1.0

    @staticmethod
    def test_collision_free_reference(simulator, hand, params):
        clip = static_clip(hand, (0.8, 0.8, 1.0))
        joints = clip.hand_joints.copy()
        joints[:, 5:, 6] = 0.3
        clip = clip.replace(hand_joints=joints, hand_keypoints=hand.keypoints(joints))
        retarget = prep.replay_retarget(clip, simulator, params)
        np.testing.assert_allclose(retarget.joints[:, -1], joints[:, -1], atol=0.01)
        np.testing.assert_allclose(retarget.joints[:, :5], joints[:, :5], atol=1e-9)

    @staticmethod
    def test_penetrating_palm_is_pushed_out(simulator, hand, params):
        clip = static_clip(hand, (0.10 + 0.025 - 0.005, 0.0, 0.04))
        before = prep.penetration_depths(simulator, clip, clip.hand_joints)
        assert before[0, 0, 0] == pytest.approx(0.005)
        retarget = prep.replay_retarget(clip, simulator, params)
        after = prep.penetration_depths(simulator, clip, retarget.joints)
        assert after[0, -1, 0] <= 1e-3
        assert retarget.joints[0, -1, 0] > clip.hand_joints[0, -1, 0]

    @staticmethod
    def test_joint_mismatch(simulator, clip, params):
        short = clip.replace(hand_joints=clip.hand_joints[..., :7])
        with pytest.raises(prep.PrepError, match="clip has 7 joints, hand toy-hand"):
            prep.replay_retarget(short, simulator, params)

    @staticmethod
    def test_divergence_names_frame(simulator, hand, params):
        clip = static_clip(hand, (0.8, 0.8, 1.0), frames=6)
        joints = clip.hand_joints.copy()
        joints[0, 3, 6] = np.nan
        with pytest.raises(prep.PrepError, match=r"^frame 3: non-finite hand_q"):
            prep.replay_retarget(clip.replace(hand_joints=joints), simulator, params)


class TestSidecars:
    @staticmethod
    def test_sidecar_path():
        path = pathlib.Path("runs/demos/lift.json")
        assert prep.sidecar_path(path, prep.CONTACTS_SUFFIX) == pathlib.Path(
            "runs/demos/lift.contacts.json"
        )
        assert prep.sidecar_path(path, prep.RETARGET_SUFFIX) == pathlib.Path(
            "runs/demos/lift.retarget.json"
        )

    @staticmethod
    def test_contacts_round_trip(obj, hand, clip):
        annotations = prep.approximate_contacts(clip, obj, hand, 0.02, 50)
        dct = json.loads(json.dumps(prep.contacts_to_dict(annotations, "abc")))
        assert dct["config_hash"] == "abc"
        loaded = prep.contacts_from_dict(dct)
        for a, b in zip(annotations, loaded):
            np.testing.assert_array_equal(a.mask, b.mask)
            np.testing.assert_array_equal(a.contacts, b.contacts)
            assert (b.gamma, b.n_c, b.d_max) == (0.02, 50, 0.10)

    @staticmethod
    def test_retarget_round_trip(hand):
        joints = np.random.default_rng(1).random((2, 6, 8))
        retarget = prep.Retarget(joints, hand.keypoints(joints), 0.002)
        loaded = prep.retarget_from_dict(
            json.loads(json.dumps(prep.retarget_to_dict(retarget, "abc")))
        )
        np.testing.assert_array_equal(loaded.joints, joints)
        np.testing.assert_array_equal(loaded.keypoints, retarget.keypoints)
        assert loaded.max_penetration == 0.002

    @staticmethod
    def test_schema_version():
        with pytest.raises(prep.PrepError, match="unsupported schema_version: 7"):
            prep.contacts_from_dict({"schema_version": 7})
        with pytest.raises(prep.PrepError, match="unsupported schema_version: None"):
            prep.retarget_from_dict({})

    @staticmethod
    def test_malformed():
        with pytest.raises(prep.PrepError, match="^malformed retarget: "):
            prep.retarget_from_dict({"schema_version": 1, "T": 2})
