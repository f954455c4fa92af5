# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import dataclasses
import hashlib
import logging
from typing import Any
from typing import Iterable
from typing import Optional

import numpy as np

from dexc import assets
from dexc import config
from dexc import curriculum
from dexc import env as env_module
from dexc import policy as policy_module
from dexc import rewards
from dexc import sim
from dexc import util

"""
Policy evaluation.

Object tracking is scored with the average distance (ADD) between an
object's surface points placed at the achieved and at the target pose,
computed per part and averaged over parts, and summarized by the area under
the accuracy-versus-threshold curve. Steps after an early termination count
as infinitely far off.
"""

SUMMARY_COLUMNS = [
    "method",
    "task",
    "seed",
    "add_auc",
    "mean_d_pos",
    "mean_d_rot",
    "mean_d_ang",
    "completion",
    "config_hash",
    "reward_hash",
]

AGGREGATE_COLUMNS = [
    "method",
    "task",
    "n",
    "add_auc_mean",
    "add_auc_std",
    "mean_d_pos",
    "mean_d_rot",
    "mean_d_ang",
    "completion",
    "reward_hash",
]


class EvaluationError(Exception):
    """Raised when an evaluation cannot be run or summarized."""


def tracking_error(
    achieved: rewards.StateLike, target: rewards.StateLike
) -> tuple[float, float, float]:
    """Position, rotation and joint angle error of one object state."""
    d_pos, d_rot, d_ang = rewards.tracking_distances(achieved, target)
    return float(d_pos), float(d_rot), float(d_ang)


def add_per_part(
    achieved_rotation: np.ndarray,
    achieved_center: np.ndarray,
    target_rotation: np.ndarray,
    target_center: np.ndarray,
    points: np.ndarray,
) -> np.ndarray:
    """
    Mean distance between `points` (P, 3, part frame) placed by two poses.

    Poses are (..., 3, 3) rotations with (..., 3) centres; the result has the
    leading shape.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[-1] != 3 or len(points) == 0:
        raise EvaluationError("ADD needs a non-empty (P, 3) point set")
    achieved = (
        np.einsum("...ij,pj->...pi", achieved_rotation, points)
        + np.asarray(achieved_center)[..., None, :]
    )
    target = (
        np.einsum("...ij,pj->...pi", target_rotation, points)
        + np.asarray(target_center)[..., None, :]
    )
    return np.linalg.norm(achieved - target, axis=-1).mean(axis=-1)


def object_add(
    obj: assets.ObjectModel, achieved: np.ndarray, target: np.ndarray
) -> np.ndarray:
    """
    ADD of every part for object state rows (..., 8).

    :return: (..., N) distances in meters.
    """
    achieved = rewards.as_rows(achieved)
    target = rewards.as_rows(target)
    achieved_poses = obj.part_poses(
        achieved[..., 0:3], achieved[..., 3:7], achieved[..., 7]
    )
    target_poses = obj.part_poses(target[..., 0:3], target[..., 3:7], target[..., 7])
    return np.stack(
        [
            add_per_part(
                achieved_poses.rotations[..., part, :, :],
                achieved_poses.centers[..., part, :],
                target_poses.rotations[..., part, :, :],
                target_poses.centers[..., part, :],
                obj.parts[part].surface_points,
            )
            for part in range(assets.PART_COUNT)
        ],
        axis=-1,
    )


def thresholds(max_threshold: float, n_thresholds: int) -> np.ndarray:
    """`n_thresholds` evenly spaced values in (0, max_threshold]."""
    return max_threshold * np.arange(1, n_thresholds + 1) / n_thresholds


def accuracy_curve(
    series: np.ndarray, max_threshold: float = 0.10, n_thresholds: int = 100
) -> np.ndarray:
    """Fraction of `series` at or below each threshold."""
    series = np.asarray(series, dtype=np.float64).ravel()
    if len(series) == 0:
        raise EvaluationError("ADD series is empty")
    if max_threshold <= 0.0:
        raise EvaluationError("max_threshold must be positive")
    if n_thresholds < 1:
        raise EvaluationError("n_thresholds must be at least 1")
    taus = thresholds(max_threshold, n_thresholds)
    return np.mean(series[:, None] <= taus[None, :], axis=0)


def add_auc(
    series: np.ndarray, max_threshold: float = 0.10, n_thresholds: int = 100
) -> float:
    """
    Area under the ADD accuracy curve, normalized to [0, 1].

    :param series: Averaged ADD per step; +inf marks failed steps.
    """
    return float(accuracy_curve(series, max_threshold, n_thresholds).mean())


@dataclasses.dataclass(frozen=True, eq=False)
class EvalReport:
    """
    Result of one evaluation.

    Per-step arrays are (episodes, L_max). Tracking errors after an early
    termination are NaN; per-part ADD there is +inf.
    """

    mode: str
    method: str
    task: str
    seed: int
    config_hash: str
    reward_hash: str
    object_id: str
    surface_points: tuple[int, ...]
    surface_points_hash: str
    max_threshold: float
    n_thresholds: int
    d_pos: np.ndarray
    d_rot: np.ndarray
    d_ang: np.ndarray
    part_add: np.ndarray  # (episodes, L_max, N)
    k_p: np.ndarray  # (L_max,)
    lengths: np.ndarray
    terminated: np.ndarray

    @property
    def episodes(self) -> int:
        return len(self.lengths)

    @property
    def avg_add(self) -> np.ndarray:
        return self.part_add.mean(axis=-1)

    @property
    def curve(self) -> np.ndarray:
        return accuracy_curve(self.avg_add, self.max_threshold, self.n_thresholds)

    @property
    def add_auc(self) -> float:
        return add_auc(self.avg_add, self.max_threshold, self.n_thresholds)

    @property
    def completion(self) -> np.ndarray:
        """Fraction of the clip each episode tracked before terminating."""
        return self.lengths / self.d_pos.shape[1]

    @property
    def success(self) -> np.ndarray:
        return ~self.terminated

    def mean_error(self, name: str) -> float:
        values = getattr(self, name)
        if np.all(np.isnan(values)):
            return float("nan")
        return float(np.nanmean(values))

    def summary(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "task": self.task,
            "seed": self.seed,
            "add_auc": self.add_auc,
            "mean_d_pos": self.mean_error("d_pos"),
            "mean_d_rot": self.mean_error("d_rot"),
            "mean_d_ang": self.mean_error("d_ang"),
            "completion": float(self.completion.mean()),
            "config_hash": self.config_hash,
            "reward_hash": self.reward_hash,
        }

    def to_dict(self) -> dict[str, Any]:
        """JSON form; NaN and +inf entries become null."""

        def finite(values: np.ndarray) -> Any:
            return util.jsonable(
                np.where(np.isfinite(values), values, None).tolist()  # type: ignore
            )

        return {
            "mode": self.mode,
            "method": self.method,
            "task": self.task,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "reward_hash": self.reward_hash,
            "object_id": self.object_id,
            "surface_points": list(self.surface_points),
            "surface_points_hash": self.surface_points_hash,
            "max_threshold": self.max_threshold,
            "n_thresholds": self.n_thresholds,
            "add_auc": self.add_auc,
            "curve": self.curve,
            "completion": self.completion,
            "success": self.success,
            "lengths": self.lengths,
            "k_p": self.k_p,
            "d_pos": finite(self.d_pos),
            "d_rot": finite(self.d_rot),
            "d_ang": finite(self.d_ang),
            "part_add": finite(self.part_add),
        }


def points_hash(obj: assets.ObjectModel) -> str:
    digest = hashlib.sha256()
    for part in obj.parts:
        digest.update(np.ascontiguousarray(part.surface_points, dtype="<f8").tobytes())
    return digest.hexdigest()[: util.HASH_LENGTH]


def controller_gains(
    cfg: config.RunConfig, obj: assets.ObjectModel
) -> sim.VirtualGains:
    """Initial curriculum gains, the strongest assistance a run ever gets."""
    return curriculum.initial_state(
        cfg.curriculum, 1, obj.total_mass, enabled=True
    ).gains


def task_name(reference: env_module.Reference) -> str:
    metadata = reference.clip.metadata
    name = metadata.get("script") or metadata.get("name")
    return str(name or reference.clip.object_id)


def evaluate(
    cfg: config.RunConfig,
    reference: env_module.Reference,
    simulator: sim.Simulator,
    mode: str,
    episodes: int = 20,
    seed: int = 0,
    actor_critic: Optional[policy_module.ActorCritic] = None,
    normalizer: Optional[policy_module.RunningNormalizer] = None,
    logger: Optional[logging.Logger] = None,
) -> EvalReport:
    """
    Run `episodes` episodes in parallel from frame 0 and score them.

    :param mode: ``policy`` uses the deterministic policy mean without
        assistance; ``kinematics-only`` replays the retargeted joints without
        assistance; ``controller-only`` sends zero actions under the initial
        curriculum gains.
    """
    if mode not in config.EVAL_MODES:
        raise EvaluationError(f"unknown evaluation mode: {mode}")
    if episodes < 1:
        raise EvaluationError("episodes must be at least 1")
    if mode == "policy" and (actor_critic is None or normalizer is None):
        raise EvaluationError("policy evaluation needs a checkpoint")
    logger = logger or logging.getLogger("dexc")

    rng = util.rng_streams(seed, 1)[0]
    environment = env_module.from_config(
        cfg,
        reference,
        simulator,
        episodes,
        rng,
        replay_reference=mode == "kinematics-only",
    )
    if actor_critic is not None and actor_critic.obs_dim != environment.obs_dim:
        raise EvaluationError(
            f"policy expects {actor_critic.obs_dim} observations, "
            f"environment has {environment.obs_dim}"
        )
    if actor_critic is not None and actor_critic.act_dim != environment.act_dim:
        raise EvaluationError(
            f"policy emits {actor_critic.act_dim} actions, "
            f"environment needs {environment.act_dim}"
        )
    gains = sim.ZERO_GAINS
    if mode == "controller-only":
        gains = controller_gains(cfg, simulator.object)

    l_max = reference.l_max
    part_count = assets.PART_COUNT
    d_pos = np.full((episodes, l_max), np.nan)
    d_rot = np.full((episodes, l_max), np.nan)
    d_ang = np.full((episodes, l_max), np.nan)
    part_add = np.full((episodes, l_max, part_count), np.inf)
    k_p = np.zeros(l_max)
    lengths = np.zeros(episodes, dtype=np.int64)
    terminated = np.zeros(episodes, dtype=bool)
    running = np.ones(episodes, dtype=bool)
    targets = reference.clip.object_targets

    obs = environment.reset()
    for step in range(l_max):
        if mode == "policy":
            normalized = normalizer.normalize(obs)  # type: ignore[union-attr]
            sample = actor_critic.act(  # type: ignore[union-attr]
                normalized, None, deterministic=True
            )
            raw = sample.actions
        else:
            raw = np.zeros((episodes, environment.act_dim))
        frame = environment.frame + 1
        result = environment.step(raw, gains)
        k_p[step] = gains.kp
        errors = rewards.tracking_distances(result.achieved, targets[frame])
        add = object_add(simulator.object, result.achieved, targets[frame])
        live = np.flatnonzero(running)
        d_pos[live, step] = errors[0][live]
        d_rot[live, step] = errors[1][live]
        d_ang[live, step] = errors[2][live]
        part_add[live, step] = add[live]
        lengths[live] += 1
        terminated |= running & result.terminated
        running &= ~result.done
        if not running.any():
            break
        logger.debug("step %d: %d episodes running", step, int(running.sum()))

    method = cfg.train.method if mode == "policy" else mode
    report = EvalReport(
        mode=mode,
        method=method,
        task=task_name(reference),
        seed=seed,
        config_hash=cfg.config_hash,
        reward_hash=cfg.reward_hash,
        object_id=simulator.object.object_id,
        surface_points=tuple(
            len(part.surface_points) for part in simulator.object.parts
        ),
        surface_points_hash=points_hash(simulator.object),
        max_threshold=cfg.eval.max_threshold,
        n_thresholds=cfg.eval.n_thresholds,
        d_pos=d_pos,
        d_rot=d_rot,
        d_ang=d_ang,
        part_add=part_add,
        k_p=k_p,
        lengths=lengths,
        terminated=terminated,
    )
    logger.info(
        "%s: ADD-AUC %.4f, completion %.3f over %d episodes",
        method,
        report.add_auc,
        float(report.completion.mean()),
        episodes,
    )
    return report


def _float(row: dict[str, Any], key: str) -> float:
    try:
        return float(row[key])
    except (KeyError, TypeError, ValueError):
        raise EvaluationError(f"summary row has no numeric {key}")


def _mean(rows: list[dict[str, Any]], key: str) -> float:
    return float(np.mean([_float(row, key) for row in rows]))


def aggregate(
    rows: Iterable[dict[str, Any]], allow_mixed: bool = False
) -> list[dict[str, Any]]:
    """
    Group summary rows by (method, task) with mean and sample std of ADD-AUC.

    :param allow_mixed: Aggregate rows whose reward configurations differ.
    :raises EvaluationError: On mixed reward hashes without `allow_mixed`.
    """
    rows = list(rows)
    if not rows:
        raise EvaluationError("no summaries to aggregate")
    hashes = sorted({str(row.get("reward_hash", "")) for row in rows})
    if len(hashes) > 1 and not allow_mixed:
        raise EvaluationError(
            f"mixed reward configurations ({', '.join(hashes)}), use --allow-mixed"
        )
    groups: dict[tuple[str, str], list[dict[str, Any]]] = {}
    for row in rows:
        groups.setdefault((str(row["method"]), str(row["task"])), []).append(row)
    result = []
    for (method, task), members in sorted(groups.items()):
        aucs = np.array([_float(row, "add_auc") for row in members])
        result.append(
            {
                "method": method,
                "task": task,
                "n": len(members),
                "add_auc_mean": float(aucs.mean()),
                "add_auc_std": float(aucs.std(ddof=1)) if len(aucs) > 1 else 0.0,
                "mean_d_pos": _mean(members, "mean_d_pos"),
                "mean_d_rot": _mean(members, "mean_d_rot"),
                "mean_d_ang": _mean(members, "mean_d_ang"),
                "completion": _mean(members, "completion"),
                "reward_hash": ",".join(
                    sorted({str(row["reward_hash"]) for row in members})
                ),
            }
        )
    return result
