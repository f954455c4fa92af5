# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import dataclasses
import pathlib
from typing import Any
from typing import ClassVar
from typing import Iterable
from typing import Optional
from typing import TypeVar

import tomli

from dexc import util

"""
Run configuration.

A run is described by one TOML document: either a standalone ``dexc.toml``
or the ``[tool.dexc]`` table of a ``pyproject.toml``. Every section maps to
a frozen dataclass below; unknown keys and sections are errors.
"""

DEFAULT_FILE = "dexc.toml"

METHODS = ("dexmachina", "no-curriculum", "task-only", "maniptrans")
ACTION_MODES = ("hybrid", "absolute", "full-residual")
EVAL_MODES = ("policy", "kinematics-only", "controller-only")


class ConfigError(Exception):
    """Raised when there is a configuration error."""


S = TypeVar("S", bound="Section")


def _type_name(kind: Any) -> str:
    return {float: "number", int: "int", str: "str", bool: "bool"}.get(
        kind, "list of numbers"
    )


def _coerce(section: str, key: str, value: Any, default: Any) -> Any:
    kind = type(default)
    if kind is bool:
        ok = isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is tuple:
        ok = isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        )
        if ok:
            value = tuple(type(default[0])(v) if default else v for v in value)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ConfigError(f"{section}: {key} must be {_type_name(kind)}")
    return value


@dataclasses.dataclass(frozen=True)
class Section:
    """
    Base of all configuration sections.

    Subclasses declare every option as a dataclass field with a default; the
    default's type is the option's type.
    """

    name: ClassVar[str] = ""

    @classmethod
    def from_dict(cls: type[S], dct: dict[str, Any]) -> S:
        """
        Construct section from dictionary as parsed by `tomli`.

        Known options are popped from `dct`; anything left over is reported.
        """
        values = {}
        for field in dataclasses.fields(cls):
            if field.name in dct:
                default = field.default
                if default is dataclasses.MISSING:
                    default = field.default_factory()  # type: ignore[misc]
                values[field.name] = _coerce(
                    cls.name, field.name, dct.pop(field.name), default
                )
        if dct:
            unexpected = ", ".join(sorted(dct.keys()))
            raise ConfigError(f"unexpected options: {unexpected}")
        section = cls(**values)
        section.validate()
        return section

    def validate(self):
        pass

    def _require(self, condition: bool, key: str, rule: str):
        if not condition:
            raise ConfigError(f"{self.name}: {key} {rule}")


@dataclasses.dataclass(frozen=True)
class TaskConfig(Section):
    """Demonstration source: a demo file, or a script to generate one."""

    name: ClassVar[str] = "task"

    demo: str = ""
    script: str = "lift-open-close"
    frames: int = 300
    dt: float = 0.02

    def validate(self):
        self._require(self.frames >= 2, "frames", "must be at least 2")
        self._require(self.dt > 0.0, "dt", "must be positive")


@dataclasses.dataclass(frozen=True)
class AssetsConfig(Section):
    name: ClassVar[str] = "assets"

    hand: str = "builtin:toy-hand"
    object: str = "builtin:box-with-lid"


@dataclasses.dataclass(frozen=True)
class SimConfig(Section):
    """
    Simulator parameters.

    Stiffness values are N/m, damping N*s/m. A `force_cap` of zero leaves the
    virtual controller unsaturated.
    """

    name: ClassVar[str] = "sim"

    substeps: int = 4
    gravity: tuple = (0.0, 0.0, -9.81)
    friction: float = 1.0
    contact_stiffness: float = 5e3
    contact_damping: float = 50.0
    tangential_stiffness: float = 2.5e3
    tangential_damping: float = 20.0
    table: bool = True
    table_height: float = 0.0
    table_stiffness: float = 5e3
    table_damping: float = 30.0
    rotation_gain_ratio: float = 0.1
    force_cap: float = 0.0
    velocity_limit: float = 50.0
    contact_force_scale: float = 20.0

    def validate(self):
        self._require(self.substeps >= 1, "substeps", "must be at least 1")
        self._require(len(self.gravity) == 3, "gravity", "must have 3 values")
        self._require(self.friction >= 0.0, "friction", "must not be negative")
        for key in (
            "contact_stiffness",
            "contact_damping",
            "tangential_stiffness",
            "table_stiffness",
            "rotation_gain_ratio",
            "velocity_limit",
            "contact_force_scale",
        ):
            self._require(getattr(self, key) > 0.0, key, "must be positive")
        self._require(self.force_cap >= 0.0, "force_cap", "must not be negative")


@dataclasses.dataclass(frozen=True)
class PrepConfig(Section):
    """Object-aware replay and contact approximation."""

    name: ClassVar[str] = "prep"

    gamma: float = 0.01
    n_c: int = 50
    replay_substeps: int = 8
    replay_gain_scale: float = 0.2
    sphere_samples: int = 16

    def validate(self):
        self._require(self.gamma > 0.0, "gamma", "must be positive")
        self._require(self.n_c >= 1, "n_c", "must be at least 1")
        self._require(
            self.replay_substeps >= 1, "replay_substeps", "must be at least 1"
        )
        self._require(
            self.replay_gain_scale > 0.0, "replay_gain_scale", "must be positive"
        )
        self._require(
            self.sphere_samples >= 0, "sphere_samples", "must not be negative"
        )


@dataclasses.dataclass(frozen=True)
class ActionConfig(Section):
    """
    Action mapping.

    :s_t: Wrist translation residual scale (meters).
    :s_r: Wrist rotation residual scale (radians).
    """

    name: ClassVar[str] = "actions"

    mode: str = "hybrid"
    s_t: float = 0.02
    s_r: float = 0.1

    def validate(self):
        self._require(
            self.mode in ACTION_MODES,
            "mode",
            f"must be one of {', '.join(ACTION_MODES)}",
        )
        self._require(self.s_t > 0.0, "s_t", "must be positive")
        self._require(self.s_r > 0.0, "s_r", "must be positive")


@dataclasses.dataclass(frozen=True)
class RewardConfig(Section):
    name: ClassVar[str] = "rewards"

    beta_pos: float = 20.0
    beta_rot: float = 3.0
    beta_ang: float = 5.0
    beta_imi: float = 30.0
    beta_bc: float = 5.0
    beta_con: float = 30.0
    lambda_task: float = 1.0
    lambda_imi: float = 0.1
    lambda_bc: float = 0.05
    lambda_con: float = 0.1
    d_max: float = 0.10

    def validate(self):
        betas = ("beta_pos", "beta_rot", "beta_ang", "beta_imi", "beta_bc", "beta_con")
        for key in betas:
            self._require(getattr(self, key) > 0.0, key, "must be positive")
        for key in ("lambda_task", "lambda_imi", "lambda_bc", "lambda_con"):
            self._require(getattr(self, key) >= 0.0, key, "must not be negative")
        self._require(self.d_max > 0.0, "d_max", "must be positive")

    @property
    def lambda_sum(self) -> float:
        return self.lambda_task + self.lambda_imi + self.lambda_bc + self.lambda_con


@dataclasses.dataclass(frozen=True)
class CurriculumConfig(Section):
    """
    Gain decay and baseline schedule parameters.

    `kv_init` of zero means critical damping for `kp_init` and the object's
    total mass. `max_iteration` of zero means the training iteration budget.
    """

    name: ClassVar[str] = "curriculum"

    kp_init: float = 3e4
    kv_init: float = 0.0
    phi_p: float = 0.9
    phi_v: float = 0.95
    sigma_task: float = 0.6
    sigma_imi: float = 0.5
    sigma_bc: float = 0.5
    sigma_con: float = 0.5
    window: int = 50
    eps_pos_init: float = 0.20
    eps_pos_final: float = 0.05
    eps_rot_init: float = 1.0
    eps_rot_final: float = 0.3
    eps_finger_init: float = 0.10
    eps_finger_final: float = 0.03
    gravity_init: float = 9.81
    gravity_final: float = 0.0
    friction_init: float = 4.0
    friction_final: float = 1.0
    interval: int = 1
    max_iteration: int = 0

    def validate(self):
        self._require(self.kp_init >= 0.0, "kp_init", "must not be negative")
        self._require(self.kv_init >= 0.0, "kv_init", "must not be negative")
        self._require(0.0 < self.phi_p < 1.0, "phi_p", "must be in (0, 1)")
        self._require(0.0 < self.phi_v < 1.0, "phi_v", "must be in (0, 1)")
        self._require(self.window >= 1, "window", "must be at least 1")
        self._require(self.interval >= 1, "interval", "must be at least 1")
        self._require(self.max_iteration >= 0, "max_iteration", "must not be negative")
        for key in (
            "eps_pos_init",
            "eps_pos_final",
            "eps_rot_init",
            "eps_rot_final",
            "eps_finger_init",
            "eps_finger_final",
            "gravity_init",
            "friction_init",
            "friction_final",
        ):
            self._require(getattr(self, key) > 0.0, key, "must be positive")
        self._require(
            self.gravity_final >= 0.0, "gravity_final", "must not be negative"
        )


@dataclasses.dataclass(frozen=True)
class TrainConfig(Section):
    name: ClassVar[str] = "train"

    method: str = "dexmachina"
    n_envs: int = 64
    horizon: int = 128
    minibatches: int = 4
    epochs: int = 5
    clip: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    max_iterations: int = 2000
    hidden: tuple = (256, 256)
    init_log_std: float = -1.0
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 1.0
    term_pos: float = 0.10
    term_rot: float = 1.0
    reset_noise: float = 0.0
    best_window: int = 10
    log_rewards: bool = False

    def validate(self):
        self._require(
            self.method in METHODS, "method", f"must be one of {', '.join(METHODS)}"
        )
        for key in ("n_envs", "horizon", "minibatches", "epochs", "best_window"):
            self._require(getattr(self, key) >= 1, key, "must be at least 1")
        self._require(
            self.max_iterations >= 0, "max_iterations", "must not be negative"
        )
        self._require(
            len(self.hidden) >= 1 and all(size >= 1 for size in self.hidden),
            "hidden",
            "must list positive layer sizes",
        )
        for key in ("clip", "learning_rate", "max_grad_norm", "term_pos", "term_rot"):
            self._require(getattr(self, key) > 0.0, key, "must be positive")
        self._require(0.0 <= self.gamma <= 1.0, "gamma", "must be in [0, 1]")
        self._require(0.0 <= self.gae_lambda <= 1.0, "gae_lambda", "must be in [0, 1]")
        self._require(
            -5.0 <= self.init_log_std <= 1.0, "init_log_std", "must be in [-5, 1]"
        )
        self._require(self.reset_noise >= 0.0, "reset_noise", "must not be negative")
        self._require(
            self.n_envs * self.horizon >= self.minibatches,
            "minibatches",
            "must not exceed n_envs * horizon",
        )

    @property
    def curriculum_mode(self) -> str:
        return {
            "dexmachina": "dexmachina",
            "maniptrans": "baseline",
        }.get(self.method, "none")


@dataclasses.dataclass(frozen=True)
class EvalConfig(Section):
    name: ClassVar[str] = "eval"

    mode: str = "policy"
    checkpoint: str = ""
    episodes: int = 20
    max_threshold: float = 0.10
    n_thresholds: int = 100

    def validate(self):
        self._require(
            self.mode in EVAL_MODES, "mode", f"must be one of {', '.join(EVAL_MODES)}"
        )
        self._require(self.episodes >= 1, "episodes", "must be at least 1")
        self._require(self.max_threshold > 0.0, "max_threshold", "must be positive")
        self._require(self.n_thresholds >= 1, "n_thresholds", "must be at least 1")


SECTIONS: tuple[type[Section], ...] = (
    TaskConfig,
    AssetsConfig,
    SimConfig,
    PrepConfig,
    ActionConfig,
    RewardConfig,
    CurriculumConfig,
    TrainConfig,
    EvalConfig,
)


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """
    Complete, resolved run configuration.
    """

    seed: int = 0
    output_dir: str = "runs"
    task: TaskConfig = TaskConfig()
    assets: AssetsConfig = AssetsConfig()
    sim: SimConfig = SimConfig()
    prep: PrepConfig = PrepConfig()
    actions: ActionConfig = ActionConfig()
    rewards: RewardConfig = RewardConfig()
    curriculum: CurriculumConfig = CurriculumConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @property
    def config_hash(self) -> str:
        return util.config_hash(self.to_dict())

    @property
    def reward_hash(self) -> str:
        return util.config_hash(dataclasses.asdict(self.rewards))

    @property
    def effective_rewards(self) -> RewardConfig:
        """Reward weights as trained: `task-only` drops the auxiliary terms."""
        if self.train.method == "task-only":
            return dataclasses.replace(
                self.rewards, lambda_imi=0.0, lambda_bc=0.0, lambda_con=0.0
            )
        return self.rewards

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, dct: dict[str, Any]) -> "RunConfig":
        """
        Create `RunConfig` from a dictionary as parsed by `tomli`.

        :param dct: Top-level options and one table per section. Consumed.
        """
        values: dict[str, Any] = {}
        for key, kind in (("seed", int), ("output_dir", str)):
            if key in dct:
                value = dct.pop(key)
                if not isinstance(value, kind) or isinstance(value, bool):
                    raise ConfigError(f"{key} must be {_type_name(kind)}")
                values[key] = value
        for section_cls in SECTIONS:
            section_dct = dct.pop(section_cls.name, {})
            if not isinstance(section_dct, dict):
                raise ConfigError(f"{section_cls.name} must be section")
            values[section_cls.name] = section_cls.from_dict(section_dct)
        unexpected_options = ", ".join(
            sorted(k for (k, v) in dct.items() if not isinstance(v, dict))
        )
        if unexpected_options:
            raise ConfigError(f"unexpected options: {unexpected_options}")
        unexpected_sections = ", ".join(
            sorted(k for (k, v) in dct.items() if isinstance(v, dict))
        )
        if unexpected_sections:
            raise ConfigError(f"unexpected sections: {unexpected_sections}")
        return cls(**values)


def parse_override(override: str) -> tuple[str, str, Any]:
    """
    Parse a ``section.key=value`` override.

    The value is read as a TOML value; anything that is not valid TOML is
    taken as a plain string, so ``task.script=lift`` works unquoted.
    """
    name, sep, raw = override.partition("=")
    if not sep or not name.strip():
        raise ConfigError(f"override must look like section.key=value: {override}")
    section, dot, key = name.strip().rpartition(".")
    try:
        value = tomli.loads(f"value = {raw.strip()}")["value"]
    except tomli.TOMLDecodeError:
        value = raw.strip()
    return section, key, value


def apply_overrides(dct: dict[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
    for override in overrides:
        section, key, value = parse_override(override)
        if not section:
            dct[key] = value
            continue
        table = dct.setdefault(section, {})
        if not isinstance(table, dict):
            raise ConfigError(f"{section} must be section")
        table[key] = value
    return dct


def find_pyproject() -> Optional[pathlib.Path]:
    """
    Find `pyproject.toml` in CWD or one of its parents.
    :return: Absolute path to `pyproject.toml` if found, else None.
    """
    current_path = pathlib.Path.cwd()
    while True:
        pyproject = current_path / "pyproject.toml"
        if pyproject.is_file():
            return pyproject
        parent = current_path.parent
        if parent == current_path:
            return None
        current_path = parent


def parse(path: pathlib.Path) -> dict[str, Any]:
    """
    Parse a TOML file.

    :return: Returns dictionaries as parsed by `tomli` library.
    """
    with path.open("rb") as config_file:
        try:
            return tomli.load(config_file)
        except tomli.TOMLDecodeError as err:
            raise ConfigError(f"{path}: {err}")


def _run_table(path: pathlib.Path) -> dict[str, Any]:
    document = parse(path)
    if path.name != "pyproject.toml":
        return document
    tools = document.get("tool", {})
    if not isinstance(tools, dict):
        raise ConfigError("tool must be section")
    dexc = tools.get("dexc", {})
    if not isinstance(dexc, dict):
        raise ConfigError("tool.dexc must be section")
    return dexc


def load(path: Optional[pathlib.Path], overrides: Iterable[str] = ()) -> RunConfig:
    """
    Load run configuration.

    :param path: Explicit configuration file. When None, ``dexc.toml`` in the
        CWD is used, then ``[tool.dexc]`` of the nearest ``pyproject.toml``,
        then the defaults.
    :param overrides: ``section.key=value`` strings applied on top.
    """
    if path is None:
        local = pathlib.Path.cwd() / DEFAULT_FILE
        if local.is_file():
            path = local
        else:
            path = find_pyproject()
    dct = _run_table(path) if path is not None else {}
    return RunConfig.from_dict(apply_overrides(dct, overrides))
