# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import contextlib
import dataclasses
import logging
import pathlib
import sys
from typing import Iterator
from typing import Optional

import click

from dexc import actions
from dexc import artifacts
from dexc import assets
from dexc import config
from dexc import curriculum
from dexc import demo
from dexc import env as env_module
from dexc import evaluation
from dexc import prep
from dexc import rewards
from dexc import sim
from dexc import trainer

ERROR_KINDS: tuple[tuple[type[Exception], str], ...] = (
    (config.ConfigError, "config"),
    (assets.AssetError, "asset"),
    (demo.DemoError, "demo"),
    (prep.PrepError, "prep"),
    (sim.SimulationError, "simulation"),
    (actions.ActionError, "action"),
    (rewards.RewardError, "reward"),
    (curriculum.CurriculumError, "curriculum"),
    (trainer.TrainingError, "training"),
    (evaluation.EvaluationError, "evaluation"),
    (OSError, "io"),
)


@contextlib.contextmanager
def dexc_logger(verbose: int, quiet: int) -> Iterator[logging.Logger]:
    logger = logging.getLogger("dexc")
    try:
        noisy = verbose - quiet
        level = logging.WARNING - noisy * 10
        level = min(logging.CRITICAL, level)
        level = max(logging.DEBUG, level)
        logger.setLevel(level)
        stream_handler = logging.StreamHandler()
        stream_handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
        logger.addHandler(stream_handler)
        yield logger
    finally:
        del logger.manager.loggerDict["dexc"]


def error_kind(err: Exception) -> str:
    for error_type, kind in ERROR_KINDS:
        if isinstance(err, error_type):
            return kind
    return "error"


@contextlib.contextmanager
def reporting(logger: logging.Logger) -> Iterator[None]:
    """Log a pipeline error as one ``<kind>: <message>`` line and exit 1."""
    try:
        yield
    except tuple(error_type for error_type, _ in ERROR_KINDS) as err:
        message = str(err)
        if isinstance(err, OSError) and err.filename is not None:
            message = f"{err.strerror}: {err.filename}"
        logger.error("%s: %s", error_kind(err), message)
        sys.exit(1)


@dataclasses.dataclass
class Dexc:
    logger: logging.Logger
    config_path: Optional[str]
    overrides: tuple[str, ...]
    output_root: Optional[str]

    def load(self) -> config.RunConfig:
        path = None if self.config_path is None else pathlib.Path(self.config_path)
        if path is not None and not path.is_file():
            raise config.ConfigError(f"configuration file not found: {path}")
        return config.load(path, self.overrides)

    def root(self, cfg: config.RunConfig) -> pathlib.Path:
        return pathlib.Path(self.output_root or cfg.output_dir)


def demo_path(root: pathlib.Path, cfg: config.RunConfig) -> pathlib.Path:
    """Demo of the run: ``task.demo`` or the generated clip of ``task.script``."""
    if cfg.task.demo:
        return pathlib.Path(cfg.task.demo)
    return root / "demos" / f"{cfg.task.script}.json"


def task_label(cfg: config.RunConfig) -> str:
    if cfg.task.demo:
        return pathlib.Path(cfg.task.demo).stem
    return cfg.task.script


def run_dir(root: pathlib.Path, cfg: config.RunConfig, method: str) -> pathlib.Path:
    return root / task_label(cfg) / method / f"seed-{cfg.seed}"


def load_clip(path: pathlib.Path) -> demo.DemoClip:
    if not path.is_file():
        raise demo.DemoError(f"demo not found, run gen-demo first: {path}")
    return demo.load_demo(path)


def build_simulator(cfg: config.RunConfig, clip: demo.DemoClip) -> sim.Simulator:
    obj = assets.load_object(cfg.assets.object)
    hand = assets.load_hand(cfg.assets.hand)
    violations = demo.validate_demo(clip, obj, hand)
    if violations:
        raise demo.DemoError(str(violations[0]))
    return sim.Simulator(obj, hand, cfg.sim, clip.dt)


def load_reference(
    path: pathlib.Path, clip: demo.DemoClip, logger: logging.Logger
) -> env_module.Reference:
    sidecars = []
    for suffix in (prep.RETARGET_SUFFIX, prep.CONTACTS_SUFFIX):
        sidecar = prep.sidecar_path(path, suffix)
        if not sidecar.is_file():
            raise prep.PrepError(
                f"missing preprocessing output, run prep first: {sidecar}"
            )
        data = artifacts.read_json(sidecar, logger)
        if data is None:
            raise prep.PrepError(f"unreadable preprocessing output: {sidecar}")
        sidecars.append(data)
    retarget = prep.retarget_from_dict(sidecars[0])
    annotations = prep.contacts_from_dict(sidecars[1])
    return env_module.Reference.build(clip, retarget, annotations)


@click.group("dexc")
@click.option(
    "config_path",
    "--config",
    "-C",
    default=None,
    type=str,
    help="Alternate location for the run configuration file.",
)
@click.option(
    "overrides",
    "--set",
    multiple=True,
    metavar="SECTION.KEY=VALUE",
    help="Override one configuration value. May be used more than once.",
)
@click.option(
    "output_root",
    "--out",
    envvar="DEXC_OUT",
    default=None,
    type=str,
    help="Output root, overriding output_dir of the configuration.",
)
@click.option(
    "--verbose",
    "-v",
    count=True,
    help="Increase log verbosity. May be used more than once.",
)
@click.option(
    "--quiet",
    "-q",
    count=True,
    help="Decrease log verbosity. May be used more than once.",
)
@click.pass_context
def main(ctx, config_path, overrides, output_root, verbose, quiet):
    """
    Demonstration tracking for bimanual hands

    Generates synthetic demonstrations, preprocesses them into auxiliary
    reward references, trains tracking policies with or without curricula
    and evaluates them with ADD-AUC.
    """
    logger = ctx.with_resource(dexc_logger(verbose, quiet))
    ctx.obj = Dexc(
        logger=logger,
        config_path=config_path,
        overrides=tuple(overrides),
        output_root=output_root,
    )


@main.command("gen-demo")
@click.option(
    "--script", required=True, type=click.Choice(demo.SCRIPTS), help="Demo script."
)
@click.option("--frames", type=int, default=None, help="Number of frames T.")
@click.option("--dt", type=float, default=None, help="Seconds per frame.")
@click.option("--output", "-o", type=str, default=None, help="Demo file to write.")
@click.option("--force", is_flag=True, default=False, help="Overwrite existing file.")
@click.pass_obj
def gen_demo(obj: Dexc, script, frames, dt, output, force):
    """Generate a scripted demonstration."""
    logger = obj.logger
    with reporting(logger):
        cfg = obj.load()
        frames = cfg.task.frames if frames is None else frames
        dt = cfg.task.dt if dt is None else dt
        path = (
            pathlib.Path(output)
            if output
            else obj.root(cfg) / "demos" / f"{script}.json"
        )
        clip = demo.generate_demo(
            script,
            assets.load_object(cfg.assets.object),
            assets.load_hand(cfg.assets.hand),
            frames,
            dt,
        )
        if not artifacts.write_json(path, demo.clip_to_dict(clip), logger, force=force):
            sys.exit(1)
        click.echo(f"T={clip.frames} dt={clip.dt} script={script} {path}")


@main.command("prep")
@click.option("--demo", "demo_file", type=str, default=None, help="Demo file.")
@click.option(
    "--gamma",
    type=float,
    default=None,
    help="Contact distance threshold in metres, overrides prep.gamma.",
)
@click.pass_obj
def prep_command(obj: Dexc, demo_file, gamma):
    """Replay a demonstration and approximate its contacts."""
    logger = obj.logger
    if gamma is not None:
        overrides = (*obj.overrides, f"prep.gamma={gamma!r}")
        obj = dataclasses.replace(obj, overrides=overrides)
    with reporting(logger):
        cfg = obj.load()
        path = pathlib.Path(demo_file) if demo_file else demo_path(obj.root(cfg), cfg)
        clip = load_clip(path)
        simulator = build_simulator(cfg, clip)
        retarget = prep.replay_retarget(clip, simulator, cfg.prep, logger)
        annotations = prep.approximate_contacts(
            clip,
            simulator.object,
            simulator.hand,
            cfg.prep.gamma,
            cfg.prep.n_c,
            d_max=cfg.rewards.d_max,
            keypoints=retarget.keypoints,
            sphere_samples=cfg.prep.sphere_samples,
        )
        written = artifacts.write_json(
            prep.sidecar_path(path, prep.RETARGET_SUFFIX),
            prep.retarget_to_dict(retarget, cfg.config_hash),
            logger,
        )
        written &= artifacts.write_json(
            prep.sidecar_path(path, prep.CONTACTS_SUFFIX),
            prep.contacts_to_dict(annotations, cfg.config_hash),
            logger,
        )
        if not written:
            sys.exit(1)
        click.echo(
            f"frames={clip.frames} max_penetration={retarget.max_penetration:.6f} "
            f"contacts={int(annotations[0].mask.sum() + annotations[1].mask.sum())}"
        )


@main.command("train")
@click.option("--resume", type=str, default=None, help="Checkpoint to continue from.")
@click.pass_obj
def train_command(obj: Dexc, resume):
    """Train a tracking policy."""
    logger = obj.logger
    with reporting(logger):
        cfg = obj.load()
        root = obj.root(cfg)
        path = demo_path(root, cfg)
        clip = load_clip(path)
        simulator = build_simulator(cfg, clip)
        reference = load_reference(path, clip, logger)
        out_dir = run_dir(root, cfg, cfg.train.method)
        artifacts.write_json(
            out_dir / "config.json",
            {
                "config": cfg.to_dict(),
                "config_hash": cfg.config_hash,
                "reward_hash": cfg.reward_hash,
            },
            logger,
        )
        result = trainer.train(
            cfg,
            reference,
            simulator,
            logger,
            out_dir=out_dir,
            resume=pathlib.Path(resume) if resume else None,
        )
        click.echo(f"iterations={result.iteration} {out_dir}")


def _default_checkpoint(out_dir: pathlib.Path) -> pathlib.Path:
    best = out_dir / "best.npz"
    return best if best.is_file() else out_dir / "last.npz"


@main.command("eval")
@click.option(
    "--mode",
    type=click.Choice(config.EVAL_MODES),
    default=None,
    help="Evaluation mode.",
)
@click.option("--checkpoint", type=str, default=None, help="Policy checkpoint.")
@click.option("--episodes", type=int, default=None, help="Number of episodes.")
@click.pass_obj
def eval_command(obj: Dexc, mode, checkpoint, episodes):
    """Evaluate a policy or a baseline mode."""
    logger = obj.logger
    with reporting(logger):
        cfg = obj.load()
        mode = mode or cfg.eval.mode
        episodes = episodes or cfg.eval.episodes
        root = obj.root(cfg)
        path = demo_path(root, cfg)
        clip = load_clip(path)
        simulator = build_simulator(cfg, clip)
        reference = load_reference(path, clip, logger)
        actor_critic = normalizer = None
        if mode == "policy":
            out_dir = run_dir(root, cfg, cfg.train.method)
            checkpoint_path = pathlib.Path(
                checkpoint or cfg.eval.checkpoint or _default_checkpoint(out_dir)
            )
            loaded = trainer.load_checkpoint(checkpoint_path)
            if loaded.meta.get("config_hash") != cfg.config_hash:
                logger.warning(
                    "checkpoint configuration differs from the run: %s", checkpoint_path
                )
            actor_critic, normalizer = loaded.actor_critic, loaded.normalizer
        else:
            out_dir = run_dir(root, cfg, mode)
        report = evaluation.evaluate(
            cfg,
            reference,
            simulator,
            mode,
            episodes=episodes,
            seed=cfg.seed,
            actor_critic=actor_critic,
            normalizer=normalizer,
            logger=logger,
        )
        written = artifacts.write_json(
            out_dir / "report.json", report.to_dict(), logger
        )
        written &= artifacts.write_csv(
            out_dir / "summary.csv",
            evaluation.SUMMARY_COLUMNS,
            [report.summary()],
            logger,
        )
        if not written:
            sys.exit(1)
        click.echo(f"{report.method} add_auc={report.add_auc:.4f} {out_dir}")


@main.command("report")
@click.argument("dirs", nargs=-1, required=True, type=click.Path(exists=False))
@click.option(
    "--allow-mixed",
    is_flag=True,
    default=False,
    help="Aggregate summaries with different reward configurations.",
)
@click.option("--output", "-o", type=str, default=None, help="Aggregate CSV to write.")
@click.pass_obj
def report_command(obj: Dexc, dirs, allow_mixed, output):
    """Aggregate evaluation summaries across seeds and methods."""
    logger = obj.logger
    with reporting(logger):
        rows = []
        for directory in (pathlib.Path(d) for d in dirs):
            if not directory.is_dir():
                raise evaluation.EvaluationError(f"not a directory: {directory}")
            summaries = sorted(directory.rglob("summary.csv"))
            if not summaries:
                logger.warning("no summary.csv under %s", directory)
            for summary in summaries:
                loaded = artifacts.read_csv(summary, logger)
                if loaded is None:
                    sys.exit(1)
                rows.extend(loaded)
        aggregated = evaluation.aggregate(rows, allow_mixed=allow_mixed)
        if output is None:
            output = str(obj.root(obj.load()) / "report.csv")
        if not artifacts.write_csv(
            output, evaluation.AGGREGATE_COLUMNS, aggregated, logger
        ):
            sys.exit(1)
        for row in aggregated:
            click.echo(
                f"{row['method']} {row['task']} n={row['n']} "
                f"add_auc={row['add_auc_mean']:.4f} ± {row['add_auc_std']:.4f}"
            )


if __name__ == "__main__":  # pragma: no cover
    main()  # pragma: no cover
