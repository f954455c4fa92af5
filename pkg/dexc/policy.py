# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import dataclasses
from typing import NamedTuple
from typing import Optional

import numpy as np

"""
Actor-critic networks with a hand-written backward pass.

The actor maps observations to the mean of a diagonal Gaussian with a
state-independent log standard deviation; the critic has the same hidden
layout and a scalar output. Parameters live in one ordered dict so the
optimiser, checkpoints and gradient checks can treat them as a flat vector.
"""

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0

LOG_2PI = float(np.log(2.0 * np.pi))


class TrainingError(Exception):
    """Raised when policy optimisation cannot proceed."""


Params = dict[str, np.ndarray]


def _layer_names(prefix: str, count: int) -> list[tuple[str, str]]:
    return [(f"{prefix}.{i}.w", f"{prefix}.{i}.b") for i in range(count)]


def init_mlp(
    prefix: str,
    sizes: list[int],
    rng: np.random.Generator,
    output_gain: float,
) -> Params:
    params: Params = {}
    layers = _layer_names(prefix, len(sizes) - 1)
    for index, (w_name, b_name) in enumerate(layers):
        fan_in, fan_out = sizes[index], sizes[index + 1]
        gain = output_gain if index == len(layers) - 1 else 1.0
        params[w_name] = rng.normal(0.0, gain / np.sqrt(fan_in), (fan_in, fan_out))
        params[b_name] = np.zeros(fan_out)
    return params


def mlp_forward(
    params: Params, prefix: str, layers: int, x: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Tanh hidden layers, linear output. Returns output and layer inputs."""
    inputs = []
    for index, (w_name, b_name) in enumerate(_layer_names(prefix, layers)):
        inputs.append(x)
        x = x @ params[w_name] + params[b_name]
        if index < layers - 1:
            x = np.tanh(x)
    return x, inputs


def mlp_backward(
    params: Params,
    prefix: str,
    layers: int,
    inputs: list[np.ndarray],
    grad: np.ndarray,
) -> Params:
    """Gradients of all layer parameters given d(loss)/d(output)."""
    grads: Params = {}
    names = _layer_names(prefix, layers)
    for index in reversed(range(layers)):
        w_name, b_name = names[index]
        grads[w_name] = inputs[index].T @ grad
        grads[b_name] = grad.sum(axis=0)
        if index > 0:
            grad = grad @ params[w_name].T
            # Input of layer `index` is tanh of the previous pre-activation.
            grad = grad * (1.0 - inputs[index] ** 2)
    return grads


class Sample(NamedTuple):
    actions: np.ndarray
    log_prob: np.ndarray
    value: np.ndarray
    mean: np.ndarray


class LossStats(NamedTuple):
    loss: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    approx_kl: float


@dataclasses.dataclass
class ActorCritic:
    """Gaussian actor and value critic."""

    params: Params
    hidden: tuple[int, ...]
    obs_dim: int
    act_dim: int

    @classmethod
    def create(
        cls,
        obs_dim: int,
        act_dim: int,
        hidden: tuple[int, ...],
        init_log_std: float,
        rng: np.random.Generator,
    ) -> "ActorCritic":
        sizes = [obs_dim, *hidden]
        params = init_mlp("actor", sizes + [act_dim], rng, output_gain=0.01)
        params.update(init_mlp("critic", sizes + [1], rng, output_gain=1.0))
        params["log_std"] = np.full(act_dim, float(init_log_std))
        return cls(
            params=params, hidden=tuple(hidden), obs_dim=obs_dim, act_dim=act_dim
        )

    @property
    def layers(self) -> int:
        return len(self.hidden) + 1

    @property
    def log_std(self) -> np.ndarray:
        return np.clip(self.params["log_std"], LOG_STD_MIN, LOG_STD_MAX)

    def copy(self) -> "ActorCritic":
        return dataclasses.replace(
            self, params={k: v.copy() for k, v in self.params.items()}
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([value.ravel() for value in self.params.values()])

    def with_flat(self, vector: np.ndarray) -> "ActorCritic":
        params = {}
        offset = 0
        for name, value in self.params.items():
            params[name] = vector[offset : offset + value.size].reshape(value.shape)
            offset += value.size
        return dataclasses.replace(self, params=params)

    def mean(self, obs: np.ndarray) -> np.ndarray:
        return mlp_forward(self.params, "actor", self.layers, obs)[0]

    def value(self, obs: np.ndarray) -> np.ndarray:
        return mlp_forward(self.params, "critic", self.layers, obs)[0][:, 0]

    def log_prob(self, mean: np.ndarray, actions: np.ndarray) -> np.ndarray:
        log_std = self.log_std
        z = (actions - mean) / np.exp(log_std)
        normalizer = np.sum(log_std) + 0.5 * self.act_dim * LOG_2PI
        return -0.5 * np.sum(z * z, axis=-1) - normalizer

    def entropy(self) -> float:
        return float(np.sum(self.log_std) + 0.5 * self.act_dim * (LOG_2PI + 1.0))

    def act(
        self,
        obs: np.ndarray,
        rng: Optional[np.random.Generator],
        deterministic: bool = False,
    ) -> Sample:
        """Sample actions; `deterministic` returns the mean."""
        mean = self.mean(obs)
        if deterministic or rng is None:
            actions = mean
        else:
            actions = mean + np.exp(self.log_std) * rng.standard_normal(mean.shape)
        return Sample(actions, self.log_prob(mean, actions), self.value(obs), mean)

    def loss_and_grads(
        self,
        obs: np.ndarray,
        actions: np.ndarray,
        old_log_prob: np.ndarray,
        advantages: np.ndarray,
        returns: np.ndarray,
        clip: float,
        value_coef: float,
        entropy_coef: float,
    ) -> tuple[LossStats, Params]:
        """
        Clipped surrogate loss and its gradient.

        The surrogate gradient flows only through samples whose unclipped
        ratio term is the minimum.
        """
        count = len(obs)
        layers = self.layers
        mean, actor_inputs = mlp_forward(self.params, "actor", layers, obs)
        values, critic_inputs = mlp_forward(self.params, "critic", layers, obs)
        values = values[:, 0]

        log_std = self.log_std
        inv_var = np.exp(-2.0 * log_std)
        diff = actions - mean
        log_prob = self.log_prob(mean, actions)
        ratio = np.exp(log_prob - old_log_prob)
        clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
        unclipped_term = ratio * advantages
        clipped_term = clipped * advantages
        surrogate = np.minimum(unclipped_term, clipped_term)
        policy_loss = -float(np.mean(surrogate))
        value_error = values - returns
        value_loss = float(np.mean(value_error**2))
        entropy = self.entropy()
        loss = policy_loss + value_coef * value_loss - entropy_coef * entropy

        through = unclipped_term <= clipped_term
        d_log_prob = -np.where(through, unclipped_term, 0.0) / count
        d_mean = d_log_prob[:, None] * diff * inv_var
        grads = mlp_backward(self.params, "actor", layers, actor_inputs, d_mean)
        d_log_std = np.sum(d_log_prob[:, None] * (diff * diff * inv_var - 1.0), axis=0)
        d_log_std = d_log_std - entropy_coef
        inside = (self.params["log_std"] >= LOG_STD_MIN) & (
            self.params["log_std"] <= LOG_STD_MAX
        )
        grads["log_std"] = np.where(inside, d_log_std, 0.0)
        d_value = (2.0 * value_coef / count) * value_error
        grads.update(
            mlp_backward(self.params, "critic", layers, critic_inputs, d_value[:, None])
        )
        ordered = {name: grads[name] for name in self.params}

        stats = LossStats(
            loss=float(loss),
            policy_loss=policy_loss,
            value_loss=value_loss,
            entropy=entropy,
            clip_fraction=float(np.mean(np.abs(ratio - 1.0) > clip)),
            approx_kl=float(np.mean(old_log_prob - log_prob)),
        )
        if not np.isfinite(stats.loss):
            raise TrainingError("non-finite loss")
        return stats, ordered


@dataclasses.dataclass
class Adam:
    """Adam optimiser state keyed like the parameters."""

    first: Params
    second: Params
    steps: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Params) -> "Adam":
        return cls(
            first={k: np.zeros_like(v) for k, v in params.items()},
            second={k: np.zeros_like(v) for k, v in params.items()},
        )

    def step(self, params: Params, grads: Params, learning_rate: float) -> None:
        """Update `params` in place."""
        self.steps += 1
        correction1 = 1.0 - self.beta1**self.steps
        correction2 = 1.0 - self.beta2**self.steps
        for name, grad in grads.items():
            self.first[name] = self.beta1 * self.first[name] + (1.0 - self.beta1) * grad
            self.second[name] = self.beta2 * self.second[name] + (1.0 - self.beta2) * (
                grad * grad
            )
            update = (self.first[name] / correction1) / (
                np.sqrt(self.second[name] / correction2) + self.epsilon
            )
            params[name] = params[name] - learning_rate * update


def clip_grad_norm(grads: Params, max_norm: float) -> float:
    """Scale `grads` in place to a global norm of at most `max_norm`."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / norm
        for name in grads:
            grads[name] = grads[name] * scale
    return norm


@dataclasses.dataclass
class RunningNormalizer:
    """Running mean and variance of observations, merged batch by batch."""

    mean: np.ndarray
    var: np.ndarray
    count: float = 1e-4
    clip: float = 10.0

    @classmethod
    def create(cls, dim: int) -> "RunningNormalizer":
        return cls(mean=np.zeros(dim), var=np.ones(dim))

    def update(self, batch: np.ndarray) -> None:
        batch_mean = batch.mean(axis=0)
        batch_var = batch.var(axis=0)
        batch_count = len(batch)
        total = self.count + batch_count
        delta = batch_mean - self.mean
        self.mean = self.mean + delta * batch_count / total
        m2 = (
            self.var * self.count
            + batch_var * batch_count
            + delta**2 * self.count * batch_count / total
        )
        self.var = m2 / total
        self.count = total

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        scaled = (obs - self.mean) / np.sqrt(self.var + 1e-8)
        return np.clip(scaled, -self.clip, self.clip)
