# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import collections
import dataclasses
import logging
import pathlib
from typing import Any
from typing import NamedTuple
from typing import Optional

import numpy as np

from dexc import artifacts
from dexc import config
from dexc import curriculum
from dexc import env as env_module
from dexc import policy as policy_module
from dexc import rewards
from dexc import sim
from dexc import util

"""
On-policy actor-critic training with a clipped surrogate objective.

One iteration collects a fixed horizon of steps from every environment,
feeds finished episodes to the curriculum, then runs several epochs of
minibatch updates on generalized advantage estimates.
"""

TRAIN_COLUMNS = [
    "iteration",
    "episodes",
    "mean_length",
    "mean_task",
    "mean_imi",
    "mean_bc",
    "mean_con",
    "mean_total",
    "loss",
    "policy_loss",
    "value_loss",
    "entropy",
    "approx_kl",
    "clip_fraction",
    "k_p",
    "k_v",
    "gravity",
    "friction",
]

CURRICULUM_COLUMNS = [
    "iteration",
    "k_p",
    "k_v",
    "zeroed",
    "mean_task",
    "mean_imi",
    "mean_bc",
    "mean_con",
]

REWARD_COLUMNS = ["iteration", "step", "env", "frame"] + [
    field.name for field in dataclasses.fields(rewards.RewardBreakdown)
]

ENV_STREAM, ACTION_STREAM, MINIBATCH_STREAM = 0, 1, 2

TrainingError = policy_module.TrainingError


class Batch(NamedTuple):
    """Rollout data shaped (horizon, n_envs, ...); `values` has horizon + 1 rows."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    terms: np.ndarray  # (horizon, n_envs, 4) task, imi, bc, con
    breakdowns: list[rewards.RewardBreakdown]
    frames: np.ndarray
    episodes: list[env_module.EpisodeRecord]


def collect_rollouts(
    actor_critic: policy_module.ActorCritic,
    environment: env_module.TrackingEnv,
    normalizer: policy_module.RunningNormalizer,
    gains: sim.VirtualGains,
    horizon: int,
    rng: np.random.Generator,
    obs: np.ndarray,
    deterministic: bool = False,
) -> tuple[Batch, np.ndarray]:
    """
    Step every environment `horizon` times with the current policy.

    :param obs: Raw observations the environments are in.
    :return: The batch (with normalized observations) and the raw
        observations to continue from.
    """
    n_envs = environment.n_envs
    batch_obs = np.zeros((horizon, n_envs, environment.obs_dim))
    batch_actions = np.zeros((horizon, n_envs, environment.act_dim))
    log_probs = np.zeros((horizon, n_envs))
    step_rewards = np.zeros((horizon, n_envs))
    values = np.zeros((horizon + 1, n_envs))
    dones = np.zeros((horizon, n_envs), dtype=bool)
    terms = np.zeros((horizon, n_envs, len(rewards.TERMS)))
    frames = np.zeros((horizon, n_envs), dtype=np.int64)
    breakdowns = []
    episodes: list[env_module.EpisodeRecord] = []

    for step in range(horizon):
        if not deterministic:
            normalizer.update(obs)
        normalized = normalizer.normalize(obs)
        sample = actor_critic.act(normalized, rng, deterministic=deterministic)
        if not np.all(np.isfinite(sample.actions)):
            raise TrainingError(f"non-finite policy output at rollout step {step}")
        batch_obs[step] = normalized
        batch_actions[step] = sample.actions
        log_probs[step] = sample.log_prob
        values[step] = sample.value
        frames[step] = environment.frame
        try:
            result = environment.step(sample.actions, gains)
        except sim.SimulationError as err:
            raise TrainingError(f"rollout step {step}: {err}")
        step_rewards[step] = result.breakdown.r_total
        dones[step] = result.done
        terms[step] = np.stack(
            [result.breakdown.term(term) for term in rewards.TERMS], axis=1
        )
        breakdowns.append(result.breakdown)
        episodes.extend(result.episodes)
        obs = result.obs

    values[horizon] = actor_critic.value(normalizer.normalize(obs))
    batch = Batch(
        obs=batch_obs,
        actions=batch_actions,
        log_probs=log_probs,
        rewards=step_rewards,
        values=values,
        dones=dones,
        terms=terms,
        breakdowns=breakdowns,
        frames=frames,
        episodes=episodes,
    )
    return batch, obs


def gae_advantages(
    step_rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
    normalize: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimates and value targets.

    :param step_rewards: (H, B) rewards.
    :param values: (H + 1, B) values, the last row bootstraps the final state.
    :param dones: (H, B) episode ends; no value flows across them.
    :param normalize: Normalize advantages to zero mean and unit variance.
    :return: Advantages and returns (raw advantages plus values), both (H, B).
    """
    horizon = len(step_rewards)
    if values.shape != (horizon + 1,) + step_rewards.shape[1:]:
        raise TrainingError("values need one more row than rewards")
    if dones.shape != step_rewards.shape:
        raise TrainingError("dones and rewards shapes differ")
    advantages = np.zeros_like(step_rewards, dtype=np.float64)
    running = np.zeros(step_rewards.shape[1:])
    for t in reversed(range(horizon)):
        alive = 1.0 - dones[t]
        delta = step_rewards[t] + gamma * values[t + 1] * alive - values[t]
        running = delta + gamma * lam * alive * running
        advantages[t] = running
    returns = advantages + values[:-1]
    if normalize:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    return advantages, returns


def ppo_update(
    actor_critic: policy_module.ActorCritic,
    optimiser: policy_module.Adam,
    batch: Batch,
    advantages: np.ndarray,
    returns: np.ndarray,
    cfg: config.TrainConfig,
    rng: np.random.Generator,
) -> dict[str, float]:
    """
    Run the configured epochs of minibatch updates, in place.

    :return: Loss statistics averaged over all minibatches.
    """
    obs = batch.obs.reshape(-1, batch.obs.shape[-1])
    acts = batch.actions.reshape(-1, batch.actions.shape[-1])
    old_log_probs = batch.log_probs.reshape(-1)
    flat_advantages = advantages.reshape(-1)
    flat_returns = returns.reshape(-1)
    count = len(obs)
    totals: dict[str, float] = collections.defaultdict(float)
    updates = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(count)
        for indices in np.array_split(order, cfg.minibatches):
            stats, grads = actor_critic.loss_and_grads(
                obs[indices],
                acts[indices],
                old_log_probs[indices],
                flat_advantages[indices],
                flat_returns[indices],
                cfg.clip,
                cfg.value_coef,
                cfg.entropy_coef,
            )
            policy_module.clip_grad_norm(grads, cfg.max_grad_norm)
            optimiser.step(actor_critic.params, grads, cfg.learning_rate)
            actor_critic.params["log_std"] = np.clip(
                actor_critic.params["log_std"],
                policy_module.LOG_STD_MIN,
                policy_module.LOG_STD_MAX,
            )
            for name, value in stats._asdict().items():
                totals[name] += value
            updates += 1
    return {name: value / updates for name, value in totals.items()}


def resume_key(cfg: config.RunConfig) -> str:
    """Hash of the configuration with the iteration budget left out."""
    dct = cfg.to_dict()
    dct["train"].pop("max_iterations")
    return util.config_hash(dct)


@dataclasses.dataclass
class Checkpoint:
    actor_critic: policy_module.ActorCritic
    optimiser: policy_module.Adam
    normalizer: policy_module.RunningNormalizer
    meta: dict[str, Any]


def checkpoint_arrays(checkpoint: Checkpoint) -> dict[str, np.ndarray]:
    arrays = {}
    for name, value in checkpoint.actor_critic.params.items():
        arrays[f"param.{name}"] = value
        arrays[f"adam1.{name}"] = checkpoint.optimiser.first[name]
        arrays[f"adam2.{name}"] = checkpoint.optimiser.second[name]
    arrays["norm.mean"] = checkpoint.normalizer.mean
    arrays["norm.var"] = checkpoint.normalizer.var
    arrays["meta"] = artifacts.encode_meta(checkpoint.meta)
    return arrays


def save_checkpoint(
    path: pathlib.Path, checkpoint: Checkpoint, logger: logging.Logger
) -> bool:
    return artifacts.write_npz(path, checkpoint_arrays(checkpoint), logger)


def load_checkpoint(path: pathlib.Path) -> Checkpoint:
    """
    Read a checkpoint written by `save_checkpoint`.

    :raises TrainingError: If the file is missing or malformed.
    """
    try:
        arrays = artifacts.read_npz(path)
        meta = artifacts.decode_meta(arrays.pop("meta"))
        names = [key[len("param.") :] for key in arrays if key.startswith("param.")]
        order = meta["param_order"]
        if sorted(order) != sorted(names):
            raise TrainingError(f"{path}: parameter names do not match metadata")
        params = {name: arrays[f"param.{name}"] for name in order}
        optimiser = policy_module.Adam(
            first={name: arrays[f"adam1.{name}"] for name in order},
            second={name: arrays[f"adam2.{name}"] for name in order},
            steps=int(meta["adam_steps"]),
        )
        normalizer = policy_module.RunningNormalizer(
            mean=arrays["norm.mean"],
            var=arrays["norm.var"],
            count=float(meta["norm_count"]),
        )
        actor_critic = policy_module.ActorCritic(
            params=params,
            hidden=tuple(meta["hidden"]),
            obs_dim=int(meta["obs_dim"]),
            act_dim=int(meta["act_dim"]),
        )
    except (OSError, KeyError, ValueError) as err:
        raise TrainingError(f"{path}: unreadable checkpoint: {err}")
    return Checkpoint(actor_critic, optimiser, normalizer, meta)


@dataclasses.dataclass
class TrainResult:
    actor_critic: policy_module.ActorCritic
    normalizer: policy_module.RunningNormalizer
    curriculum_state: curriculum.CurriculumState
    iteration: int
    rows: list[dict[str, Any]]
    curriculum_rows: list[dict[str, Any]]
    best_score: Optional[float]


class Trainer:
    """
    Training loop state for one run.

    The three random streams (environment noise, action sampling, minibatch
    order) come from the seed alone, so runs that differ only in method
    draw environment noise from identical streams.
    """

    def __init__(
        self,
        cfg: config.RunConfig,
        reference: env_module.Reference,
        simulator: sim.Simulator,
        logger: logging.Logger,
    ):
        self.cfg = cfg
        self.logger = logger
        self.simulator = simulator
        streams = util.rng_streams(cfg.seed, 3)
        self.env_rng, self.action_rng, self.minibatch_rng = streams
        self.env = env_module.from_config(
            cfg, reference, simulator, cfg.train.n_envs, self.env_rng
        )
        self.mode = cfg.train.curriculum_mode
        self.actor_critic = policy_module.ActorCritic.create(
            self.env.obs_dim,
            self.env.act_dim,
            tuple(cfg.train.hidden),
            cfg.train.init_log_std,
            np.random.default_rng([cfg.seed, 3]),
        )
        self.optimiser = policy_module.Adam.zeros_like(self.actor_critic.params)
        self.normalizer = policy_module.RunningNormalizer.create(self.env.obs_dim)
        self.curriculum_state = curriculum.initial_state(
            cfg.curriculum,
            reference.l_max,
            simulator.object.total_mass,
            enabled=self.mode == "dexmachina",
        )
        self.schedule: Optional[curriculum.BaselineSchedule] = None
        if self.mode == "baseline":
            self.schedule = curriculum.BaselineSchedule.from_config(
                cfg.curriculum, cfg.train.max_iterations
            )
        self.iteration = 0
        self.best_score: Optional[float] = None
        self.scores: collections.deque = collections.deque(maxlen=cfg.train.best_window)

    @property
    def gains(self) -> sim.VirtualGains:
        if self.mode == "dexmachina":
            return self.curriculum_state.gains
        return sim.ZERO_GAINS

    def unassisted(self) -> bool:
        if self.mode == "dexmachina":
            return self.curriculum_state.zeroed
        if self.schedule is not None:
            return curriculum.schedule_finished(self.schedule, self.iteration)
        return True

    def apply_schedule(self) -> None:
        """Set gravity, friction and tolerances for the current iteration."""
        if self.schedule is None:
            return
        t = min(self.iteration, self.schedule.max_iteration)
        self.simulator.gravity = np.array(
            [0.0, 0.0, curriculum.applied_gravity(self.schedule, t)]
        )
        self.simulator.friction = curriculum.baseline_value(
            self.schedule, "friction", t
        )
        self.env.thresholds = env_module.Thresholds(
            pos=curriculum.baseline_value(self.schedule, "eps_pos", t),
            rot=curriculum.baseline_value(self.schedule, "eps_rot", t),
            finger=curriculum.baseline_value(self.schedule, "eps_finger", t),
        )

    def checkpoint(self) -> Checkpoint:
        meta = {
            "config_hash": self.cfg.config_hash,
            "reward_hash": self.cfg.reward_hash,
            "resume_key": resume_key(self.cfg),
            "method": self.cfg.train.method,
            "seed": self.cfg.seed,
            "iteration": self.iteration,
            "param_order": list(self.actor_critic.params),
            "hidden": list(self.actor_critic.hidden),
            "obs_dim": self.actor_critic.obs_dim,
            "act_dim": self.actor_critic.act_dim,
            "adam_steps": self.optimiser.steps,
            "norm_count": self.normalizer.count,
            "curriculum": self.curriculum_state.to_dict(),
            "best_score": self.best_score,
            "scores": list(self.scores),
            "rng": {
                "env": util.rng_state(self.env_rng),
                "action": util.rng_state(self.action_rng),
                "minibatch": util.rng_state(self.minibatch_rng),
            },
        }
        return Checkpoint(self.actor_critic, self.optimiser, self.normalizer, meta)

    def restore(self, checkpoint: Checkpoint) -> None:
        """
        Continue from `checkpoint`, which must come from the same configuration.

        Only learner state is restored: policy, optimiser, normalizer,
        curriculum, counters and random generators. Simulator states are not
        checkpointed, so `train` resets every environment to frame 0 of the
        reference before the first resumed iteration.
        """
        meta = checkpoint.meta
        if meta.get("resume_key") != resume_key(self.cfg):
            raise TrainingError("checkpoint was written with a different configuration")
        self.actor_critic = checkpoint.actor_critic
        self.optimiser = checkpoint.optimiser
        self.normalizer = checkpoint.normalizer
        self.curriculum_state = curriculum.CurriculumState.from_dict(meta["curriculum"])
        self.iteration = int(meta["iteration"])
        self.best_score = meta.get("best_score")
        self.scores.extend(meta.get("scores", []))
        self.env_rng.bit_generator.state = meta["rng"]["env"]
        self.action_rng.bit_generator.state = meta["rng"]["action"]
        self.minibatch_rng.bit_generator.state = meta["rng"]["minibatch"]

    def run_iteration(self, obs: np.ndarray) -> tuple[np.ndarray, dict, dict, Batch]:
        cfg = self.cfg.train
        self.apply_schedule()
        gains = self.gains
        batch, obs = collect_rollouts(
            self.actor_critic,
            self.env,
            self.normalizer,
            gains,
            cfg.horizon,
            self.action_rng,
            obs,
        )
        if self.mode == "dexmachina":
            cs = self.curriculum_state
            for episode in batch.episodes:
                cs = curriculum.record_episode(
                    cs,
                    episode.length,
                    episode.task,
                    episode.imi,
                    episode.bc,
                    episode.con,
                )
            self.curriculum_state = curriculum.maybe_decay(cs)

        advantages, returns = gae_advantages(
            batch.rewards, batch.values, batch.dones, cfg.gamma, cfg.gae_lambda
        )
        stats = ppo_update(
            self.actor_critic,
            self.optimiser,
            batch,
            advantages,
            returns,
            cfg,
            self.minibatch_rng,
        )

        episodes = batch.episodes
        row: dict[str, Any] = {
            "iteration": self.iteration,
            "episodes": len(episodes),
            "mean_length": (
                float(np.mean([e.length for e in episodes])) if episodes else None
            ),
            "mean_total": float(batch.rewards.mean()),
            "k_p": gains.kp,
            "k_v": gains.kv,
            "gravity": float(self.simulator.gravity[2]),
            "friction": float(self.simulator.friction),
        }
        for index, term in enumerate(rewards.TERMS):
            row[f"mean_{term}"] = float(batch.terms[..., index].mean())
        row.update(stats)
        if episodes:
            self.scores.append(float(np.mean([e.task for e in episodes])))
        snapshot = curriculum.snapshot(self.curriculum_state, self.iteration)
        self.iteration += 1
        return obs, row, snapshot, batch

    def train(
        self, out_dir: Optional[pathlib.Path], resumed: bool = False
    ) -> TrainResult:
        """
        Run until `max_iterations`, writing logs and checkpoints to `out_dir`.

        ``best.npz`` is written whenever the mean episode task return over the
        last iterations improves while the run is unassisted; ``last.npz`` is
        always written at the end.

        Every call starts from freshly reset environments, also after
        `restore`, so episodes in flight when a checkpoint was written are
        not continued.
        """
        cfg = self.cfg.train
        rows: list[dict[str, Any]] = []
        curriculum_rows: list[dict[str, Any]] = []
        reward_rows: list[dict[str, Any]] = []
        obs = self.env.reset()
        while self.iteration < cfg.max_iterations:
            obs, row, snapshot, batch = self.run_iteration(obs)
            rows.append(row)
            curriculum_rows.append(snapshot)
            if cfg.log_rewards:
                reward_rows.extend(self._reward_rows(row["iteration"], batch))
            self.logger.info(
                "iteration %d: task %.4f total %.4f episodes %d k_p %.4g",
                row["iteration"],
                row["mean_task"],
                row["mean_total"],
                row["episodes"],
                row["k_p"],
            )
            if out_dir is not None and self.unassisted() and self.scores:
                score = float(np.mean(self.scores))
                if self.best_score is None or score > self.best_score:
                    self.best_score = score
                    self.logger.info("new best checkpoint, score %.4f", score)
                    save_checkpoint(
                        out_dir / "best.npz", self.checkpoint(), self.logger
                    )

        if out_dir is not None:
            append = resumed
            artifacts.write_csv(
                out_dir / "train.csv", TRAIN_COLUMNS, rows, self.logger, append=append
            )
            artifacts.write_csv(
                out_dir / "curriculum.csv",
                CURRICULUM_COLUMNS,
                curriculum_rows,
                self.logger,
                append=append,
            )
            if cfg.log_rewards:
                artifacts.write_csv(
                    out_dir / "rewards.csv",
                    REWARD_COLUMNS,
                    reward_rows,
                    self.logger,
                    append=append,
                )
            save_checkpoint(out_dir / "last.npz", self.checkpoint(), self.logger)

        return TrainResult(
            actor_critic=self.actor_critic,
            normalizer=self.normalizer,
            curriculum_state=self.curriculum_state,
            iteration=self.iteration,
            rows=rows,
            curriculum_rows=curriculum_rows,
            best_score=self.best_score,
        )

    @staticmethod
    def _reward_rows(iteration: int, batch: Batch) -> list[dict[str, Any]]:
        rows = []
        for step, breakdown in enumerate(batch.breakdowns):
            for env_index in range(len(breakdown.r_total)):
                row: dict[str, Any] = {
                    "iteration": iteration,
                    "step": step,
                    "env": env_index,
                    "frame": int(batch.frames[step, env_index]),
                }
                for field in dataclasses.fields(breakdown):
                    row[field.name] = float(getattr(breakdown, field.name)[env_index])
                rows.append(row)
        return rows


def train(
    cfg: config.RunConfig,
    reference: env_module.Reference,
    simulator: sim.Simulator,
    logger: logging.Logger,
    out_dir: Optional[pathlib.Path] = None,
    resume: Optional[pathlib.Path] = None,
) -> TrainResult:
    """
    Train a policy for `reference`.

    :param resume: Checkpoint to continue from; iteration count, optimiser,
        normalizer, curriculum and random streams are restored. Environments
        restart at frame 0 of the reference.
    """
    trainer = Trainer(cfg, reference, simulator, logger)
    if resume is not None:
        trainer.restore(load_checkpoint(resume))
        logger.info("resuming at iteration %d", trainer.iteration)
    return trainer.train(out_dir, resumed=resume is not None)
