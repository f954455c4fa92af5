# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import json
import math

import pytest

from dexc import config
from dexc import curriculum
from dexc import sim


def make_state(kp=100.0, kv=20.0, window=3, l_max=10, **kwargs):
    return curriculum.CurriculumState(
        kp=kp,
        kv=kv,
        phi_p=0.9,
        phi_v=0.95,
        thresholds=(0.6, 0.5, 0.5, 0.5),
        l_max=l_max,
        window=window,
        **kwargs,
    )


def feed(cs, episodes, per_step=1.0):
    """Record full-length episodes earning `per_step` of every term per step."""
    total = per_step * cs.l_max
    for _ in range(episodes):
        cs = curriculum.record_episode(cs, cs.l_max, total, total, total, total)
    return cs


class TestInitialState:
    @staticmethod
    def test_critical_damping_default():
        cs = curriculum.initial_state(config.CurriculumConfig(), 299, 1.2)
        assert cs.kp == 3e4
        assert cs.kv == pytest.approx(sim.critical_damping(3e4, 1.2))
        assert cs.thresholds == (0.6, 0.5, 0.5, 0.5)
        assert cs.l_max == 299
        assert not cs.zeroed

    @staticmethod
    def test_explicit_kv():
        cfg = config.CurriculumConfig(kv_init=7.0)
        assert curriculum.initial_state(cfg, 10, 1.2).kv == 7.0

    @staticmethod
    def test_disabled():
        cs = curriculum.initial_state(config.CurriculumConfig(), 10, 1.2, enabled=False)
        assert cs.gains == sim.ZERO_GAINS
        assert cs.zeroed

    @staticmethod
    @pytest.mark.parametrize(
        "changes, message",
        [
            ({"kp": -1.0}, "gains must not be negative"),
            ({"l_max": 0}, "l_max must be at least 1"),
            ({"window": 0}, "window must be at least 1"),
        ],
    )
    def test_invalid(changes, message):
        with pytest.raises(curriculum.CurriculumError, match=message):
            make_state(**changes)


class TestRecordEpisode:
    @staticmethod
    def test_normalized_by_l_max():
        cs = curriculum.record_episode(make_state(), 4, 2.0, 3.0, 4.0, 5.0)
        assert cs.history == ((0.2,), (0.3,), (0.4,), (0.5,))

    @staticmethod
    def test_window():
        cs = make_state(window=2)
        for total in (1.0, 2.0, 3.0):
            cs = curriculum.record_episode(cs, 1, total, total, total, total)
        assert cs.history[0] == (0.2, 0.3)
        assert cs.means()["task"] == pytest.approx(0.25)

    @staticmethod
    @pytest.mark.parametrize("length", [0, 11])
    def test_length_range(length):
        with pytest.raises(curriculum.CurriculumError, match=r"outside \[1, 10\]"):
            curriculum.record_episode(make_state(), length, 1.0, 1.0, 1.0, 1.0)

    @staticmethod
    def test_non_finite():
        with pytest.raises(curriculum.CurriculumError, match="must be finite"):
            curriculum.record_episode(make_state(), 1, math.nan, 1.0, 1.0, 1.0)


class TestMaybeDecay:
    @staticmethod
    def test_empty_history_never_decays():
        cs = make_state()
        assert curriculum.maybe_decay(cs) == cs

    @staticmethod
    def test_decays_when_stable():
        cs = curriculum.maybe_decay(feed(make_state(), 3))
        assert cs.kp == pytest.approx(90.0)
        assert cs.kv == pytest.approx(19.0)
        assert cs.decay_count == 1
        assert not cs.zeroed

    @staticmethod
    def test_below_threshold_never_decays():
        cs = feed(make_state(), 3, per_step=0.55)
        for _ in range(100):
            cs = curriculum.maybe_decay(cs)
        assert cs.kp == 100.0
        assert cs.decay_count == 0

    @staticmethod
    def test_threshold_is_strict():
        cs = feed(make_state(), 1, per_step=0.6)
        assert curriculum.maybe_decay(cs).decay_count == 0

    @staticmethod
    def test_one_failing_term_blocks():
        cs = make_state()
        for _ in range(3):
            cs = curriculum.record_episode(cs, 10, 10.0, 10.0, 10.0, 1.0)
        assert curriculum.maybe_decay(cs) == cs

    @staticmethod
    def test_snaps_to_zero():
        cs = curriculum.maybe_decay(feed(make_state(kp=0.011, kv=0.5), 3))
        assert cs.kp == 0.0
        assert cs.kv == 0.0
        assert cs.zeroed
        assert cs.gains.is_zero

    @staticmethod
    def test_zero_is_absorbing():
        cs = curriculum.maybe_decay(feed(make_state(kp=0.011), 3))
        for _ in range(10):
            cs = curriculum.maybe_decay(feed(cs, 3))
        assert cs.kp == 0.0 and cs.kv == 0.0
        assert cs.decay_count == 1

    @staticmethod
    def test_decay_count_bound():
        cs = feed(make_state(kp=3e4, kv=400.0), 3)
        bound = curriculum.decays_to_zero(3e4, 0.9)
        while not cs.zeroed:
            cs = curriculum.maybe_decay(cs)
            assert cs.decay_count <= bound
        assert cs.kp == 0.0

    @staticmethod
    def test_monotone_gains():
        cs = feed(make_state(kp=5.0, kv=2.0), 3)
        previous = cs
        for _ in range(60):
            cs = curriculum.maybe_decay(cs)
            assert cs.kp <= previous.kp and cs.kv <= previous.kv
            previous = cs


@pytest.mark.parametrize(
    "kp_init, expected", [(0.005, 1), (0.02, 8), (3e4, 143)]
)
def test_decays_to_zero(kp_init, expected):
    assert curriculum.decays_to_zero(kp_init, 0.9) == expected


class TestSerialization:
    @staticmethod
    def test_round_trip():
        cs = curriculum.maybe_decay(feed(make_state(), 2))
        cs = feed(cs, 1, per_step=0.3)
        data = json.loads(json.dumps(cs.to_dict()))
        loaded = curriculum.CurriculumState.from_dict(data)
        assert loaded == cs

    @staticmethod
    def test_malformed():
        with pytest.raises(curriculum.CurriculumError, match="malformed curriculum"):
            curriculum.CurriculumState.from_dict({"kp": 1.0})

    @staticmethod
    def test_snapshot():
        record = curriculum.snapshot(feed(make_state(), 1, per_step=0.5), 7)
        assert record == {
            "iteration": 7,
            "k_p": 100.0,
            "k_v": 20.0,
            "zeroed": False,
            "mean_task": 0.5,
            "mean_imi": 0.5,
            "mean_bc": 0.5,
            "mean_con": 0.5,
        }


class TestBaselineSchedule:
    @staticmethod
    @pytest.fixture
    def sched():
        return curriculum.BaselineSchedule.from_config(config.CurriculumConfig(), 100)

    @staticmethod
    @pytest.mark.parametrize("param", curriculum.SCHEDULE_PARAMS)
    def test_endpoints_exact(sched, param):
        initial, final = sched.endpoints(param)
        assert curriculum.baseline_value(sched, param, 0) == initial
        assert curriculum.baseline_value(sched, param, 100) == final

    @staticmethod
    def test_geometric_midpoint(sched):
        value = curriculum.baseline_value(sched, "eps_pos", 50)
        assert value == pytest.approx(math.sqrt(0.20 * 0.05))

    @staticmethod
    def test_monotone(sched):
        values = [curriculum.baseline_value(sched, "friction", t) for t in range(101)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    @staticmethod
    def test_interval():
        sched = curriculum.BaselineSchedule.from_config(
            config.CurriculumConfig(interval=10), 100
        )
        assert curriculum.baseline_value(sched, "eps_rot", 9) == 1.0
        assert curriculum.baseline_value(
            sched, "eps_rot", 19
        ) == curriculum.baseline_value(sched, "eps_rot", 10)

    @staticmethod
    def test_gravity(sched):
        assert curriculum.applied_gravity(sched, 0) == 0.0
        assert curriculum.applied_gravity(sched, 100) == -9.81
        middle = curriculum.applied_gravity(sched, 50)
        assert -9.81 < middle < 0.0
        gravity = curriculum.baseline_value(sched, "gravity", 99)
        assert gravity >= curriculum.GRAVITY_FLOOR

    @staticmethod
    def test_max_iteration_override():
        sched = curriculum.BaselineSchedule.from_config(
            config.CurriculumConfig(max_iteration=20), 100
        )
        assert sched.max_iteration == 20
        assert curriculum.schedule_finished(sched, 20)
        assert not curriculum.schedule_finished(sched, 19)

    @staticmethod
    def test_iteration_range(sched):
        with pytest.raises(curriculum.CurriculumError, match=r"outside \[0, 100\]"):
            curriculum.baseline_value(sched, "eps_pos", 101)

    @staticmethod
    def test_unknown_param(sched):
        with pytest.raises(curriculum.CurriculumError, match="unknown schedule"):
            curriculum.baseline_value(sched, "wind", 3)

    @staticmethod
    @pytest.mark.parametrize(
        "values, message",
        [
            ((("eps_pos", 1.0, 0.5),), "schedule needs"),
            (
                (
                    ("eps_pos", 0.0, 0.5),
                    ("eps_rot", 1.0, 0.5),
                    ("eps_finger", 1.0, 0.5),
                    ("gravity", 1.0, 0.0),
                    ("friction", 1.0, 0.5),
                ),
                "eps_pos: initial value must be positive",
            ),
            (
                (
                    ("eps_pos", 1.0, 0.5),
                    ("eps_rot", 1.0, 0.5),
                    ("eps_finger", 1.0, 0.5),
                    ("gravity", 1.0, 0.0),
                    ("friction", 1.0, 0.0),
                ),
                "friction: final value must be positive",
            ),
        ],
    )
    def test_invalid(values, message):
        with pytest.raises(curriculum.CurriculumError, match=message):
            curriculum.BaselineSchedule(values=values, max_iteration=10)
