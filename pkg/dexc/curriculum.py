# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import dataclasses
import math
from typing import Any
from typing import Optional

from dexc import config
from dexc import sim

"""
Curricula.

`CurriculumState` implements the virtual controller gain decay: episode
rewards normalized by the maximum episode length are kept in bounded
histories, and once every history's mean clears its threshold the gains are
multiplied by their decay ratios until they reach zero for good.

`BaselineSchedule` implements the exponential parameter schedule used by the
comparison baseline: termination tolerances, gravity and friction move
geometrically from initial to final values over a fixed iteration budget.
"""

TERMS = ("task", "imi", "bc", "con")

ZERO_THRESHOLD = 0.01

GRAVITY = 9.81
GRAVITY_FLOOR = 1e-3

SCHEDULE_PARAMS = ("eps_pos", "eps_rot", "eps_finger", "gravity", "friction")


class CurriculumError(Exception):
    """Raised on invalid curriculum input."""


@dataclasses.dataclass(frozen=True)
class CurriculumState:
    """
    Gain decay state.

    `history` holds one tuple per term in `TERMS` order, oldest first, each
    at most `window` long.
    """

    kp: float
    kv: float
    phi_p: float
    phi_v: float
    thresholds: tuple[float, float, float, float]
    l_max: int
    window: int = 50
    history: tuple[tuple[float, ...], ...] = ((), (), (), ())
    zeroed: bool = False
    decay_count: int = 0

    def __post_init__(self):
        if self.kp < 0.0 or self.kv < 0.0:
            raise CurriculumError("gains must not be negative")
        if self.l_max < 1:
            raise CurriculumError("l_max must be at least 1")
        if self.window < 1:
            raise CurriculumError("window must be at least 1")

    @property
    def gains(self) -> sim.VirtualGains:
        return sim.VirtualGains(kp=self.kp, kv=self.kv)

    def means(self) -> dict[str, Optional[float]]:
        return {
            term: (sum(values) / len(values) if values else None)
            for term, values in zip(TERMS, self.history)
        }

    def to_dict(self) -> dict[str, Any]:
        dct = dataclasses.asdict(self)
        dct["thresholds"] = list(self.thresholds)
        dct["history"] = [list(values) for values in self.history]
        return dct

    @classmethod
    def from_dict(cls, dct: dict[str, Any]) -> "CurriculumState":
        try:
            return cls(
                kp=float(dct["kp"]),
                kv=float(dct["kv"]),
                phi_p=float(dct["phi_p"]),
                phi_v=float(dct["phi_v"]),
                thresholds=tuple(float(v) for v in dct["thresholds"]),  # type: ignore
                l_max=int(dct["l_max"]),
                window=int(dct["window"]),
                history=tuple(
                    tuple(float(v) for v in values) for values in dct["history"]
                ),
                zeroed=bool(dct["zeroed"]),
                decay_count=int(dct["decay_count"]),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise CurriculumError(f"malformed curriculum state: {err}")


def initial_state(
    cfg: config.CurriculumConfig, l_max: int, total_mass: float, enabled: bool = True
) -> CurriculumState:
    """
    Starting gain decay state.

    :param enabled: False gives the zeroed state used by runs without
        virtual controller assistance.
    """
    kp = cfg.kp_init if enabled else 0.0
    kv = cfg.kv_init or sim.critical_damping(kp, total_mass)
    if not enabled:
        kv = 0.0
    return CurriculumState(
        kp=kp,
        kv=kv,
        phi_p=cfg.phi_p,
        phi_v=cfg.phi_v,
        thresholds=(cfg.sigma_task, cfg.sigma_imi, cfg.sigma_bc, cfg.sigma_con),
        l_max=l_max,
        window=cfg.window,
        zeroed=kp == 0.0,
    )


def record_episode(
    cs: CurriculumState,
    length: int,
    r_task: float,
    r_imi: float,
    r_bc: float,
    r_con: float,
) -> CurriculumState:
    """
    Append one episode's cumulative rewards divided by `l_max`.

    Dividing by the maximum rather than the achieved length makes early
    terminations count as low rewards.
    """
    if not 1 <= length <= cs.l_max:
        raise CurriculumError(f"episode length {length} outside [1, {cs.l_max}]")
    totals = (r_task, r_imi, r_bc, r_con)
    if not all(math.isfinite(value) for value in totals):
        raise CurriculumError("episode rewards must be finite")
    history = tuple(
        (values + (total / cs.l_max,))[-cs.window :]
        for values, total in zip(cs.history, totals)
    )
    return dataclasses.replace(cs, history=history)


def maybe_decay(cs: CurriculumState) -> CurriculumState:
    """
    Decay the gains once every term's mean reward clears its threshold.

    kp is decayed first and snapped to zero (with kv) at or below 0.01; kv is
    decayed after that check, so a zeroed kv is multiplied once more and
    stays zero.
    """
    if cs.kp == 0.0:
        return cs
    means = cs.means()
    stable = all(
        means[term] is not None and means[term] > threshold  # type: ignore[operator]
        for term, threshold in zip(TERMS, cs.thresholds)
    )
    if not stable:
        return cs
    kp = cs.kp * cs.phi_p
    kv = cs.kv
    zeroed = False
    if kp <= ZERO_THRESHOLD:
        kp = 0.0
        kv = 0.0
        zeroed = True
    kv = kv * cs.phi_v
    return dataclasses.replace(
        cs, kp=kp, kv=kv, zeroed=zeroed, decay_count=cs.decay_count + 1
    )


def snapshot(cs: CurriculumState, iteration: int) -> dict[str, Any]:
    """Log record: iteration, gains and the mean of every history (None if empty)."""
    record: dict[str, Any] = {
        "iteration": iteration,
        "k_p": cs.kp,
        "k_v": cs.kv,
        "zeroed": cs.zeroed,
    }
    for term, mean in cs.means().items():
        record[f"mean_{term}"] = mean
    return record


def decays_to_zero(kp_init: float, phi_p: float) -> int:
    """Upper bound on decay events taking `kp_init` to zero."""
    if kp_init <= ZERO_THRESHOLD:
        return 1
    return math.ceil(math.log(ZERO_THRESHOLD / kp_init) / math.log(phi_p)) + 1


@dataclasses.dataclass(frozen=True)
class BaselineSchedule:
    """
    Exponential schedule of the comparison baseline.

    `values` maps every name in `SCHEDULE_PARAMS` to (initial, final).
    The gravity entry is a pseudo value: applied gravity is -(9.81 - value).
    """

    values: tuple[tuple[str, float, float], ...]
    max_iteration: int
    interval: int = 1

    def __post_init__(self):
        names = tuple(name for name, _, _ in self.values)
        if sorted(names) != sorted(SCHEDULE_PARAMS):
            raise CurriculumError(f"schedule needs {', '.join(SCHEDULE_PARAMS)}")
        for name, initial, final in self.values:
            if initial <= 0.0:
                raise CurriculumError(f"{name}: initial value must be positive")
            if final < 0.0 or (final == 0.0 and name != "gravity"):
                raise CurriculumError(f"{name}: final value must be positive")
        if self.max_iteration < 1:
            raise CurriculumError("max_iteration must be at least 1")
        if self.interval < 1:
            raise CurriculumError("interval must be at least 1")

    def endpoints(self, param: str) -> tuple[float, float]:
        for name, initial, final in self.values:
            if name == param:
                return initial, final
        raise CurriculumError(f"unknown schedule parameter: {param}")

    @classmethod
    def from_config(
        cls, cfg: config.CurriculumConfig, max_iterations: int
    ) -> "BaselineSchedule":
        return cls(
            values=(
                ("eps_pos", cfg.eps_pos_init, cfg.eps_pos_final),
                ("eps_rot", cfg.eps_rot_init, cfg.eps_rot_final),
                ("eps_finger", cfg.eps_finger_init, cfg.eps_finger_final),
                ("gravity", cfg.gravity_init, cfg.gravity_final),
                ("friction", cfg.friction_init, cfg.friction_final),
            ),
            max_iteration=cfg.max_iteration or max(max_iterations, 1),
            interval=cfg.interval,
        )


def baseline_value(sched: BaselineSchedule, param: str, t: int) -> float:
    """
    Value of `param` at training iteration `t`.

    omega(t) = omega_init * (omega_final / omega_init) ** (t' / I), where t'
    is `t` rounded down to a multiple of the update interval. Both ends are
    returned exactly; a zero gravity endpoint is floored at 1e-3 in between.
    """
    if not 0 <= t <= sched.max_iteration:
        raise CurriculumError(f"iteration {t} outside [0, {sched.max_iteration}]")
    initial, final = sched.endpoints(param)
    if t >= sched.max_iteration:
        return final
    stepped = (t // sched.interval) * sched.interval
    if stepped == 0:
        return initial
    if param == "gravity":
        final = max(final, GRAVITY_FLOOR)
    return initial * (final / initial) ** (stepped / sched.max_iteration)


def applied_gravity(sched: BaselineSchedule, t: int) -> float:
    """Vertical gravity component at iteration `t`, reaching -9.81 at the end."""
    if t >= sched.max_iteration:
        return -GRAVITY
    return -(GRAVITY - baseline_value(sched, "gravity", t))


def schedule_finished(sched: BaselineSchedule, t: int) -> bool:
    return t >= sched.max_iteration
