# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import json
import logging
import pathlib

import pytest

from dexc import artifacts
from dexc import config
from dexc import demo
from dexc import main
from dexc import prep
from dexc import trainer

FRAMES = "40"
LIFT = ["--set", "task.script=lift"]
TINY_TRAINING = [
    "--set",
    "train.n_envs=2",
    "--set",
    "train.horizon=4",
    "--set",
    "train.minibatches=1",
    "--set",
    "train.epochs=1",
    "--set",
    "train.hidden=[8]",
    "--set",
    "train.max_iterations=1",
]


@pytest.mark.parametrize(
    "verbose,quiet,expected",
    [
        (0, 0, logging.WARNING),
        (1, 0, logging.INFO),
        (2, 0, logging.DEBUG),
        (3, 0, logging.DEBUG),
        (0, 1, logging.ERROR),
        (0, 2, logging.CRITICAL),
        (0, 3, logging.CRITICAL),
        (2, 3, logging.ERROR),
    ],
)
def test_dexc_logger(verbose, quiet, expected):
    with main.dexc_logger(verbose, quiet) as logger:
        manager = logger.manager
        assert manager.loggerDict["dexc"] == logger
        assert logger.level == expected
        (handler,) = logger.handlers
        assert isinstance(handler, logging.StreamHandler)
    assert "dexc" not in manager.loggerDict


@pytest.mark.parametrize(
    "err, kind",
    [
        (config.ConfigError("x"), "config"),
        (demo.DemoError("x"), "demo"),
        (prep.PrepError("x"), "prep"),
        (trainer.TrainingError("x"), "training"),
        (FileNotFoundError("x"), "io"),
        (RuntimeError("x"), "error"),
    ],
)
def test_error_kind(err, kind):
    assert main.error_kind(err) == kind


class TestReporting:
    @staticmethod
    def test_one_line(caplog):
        logger = logging.getLogger("tests.dexc")
        with pytest.raises(SystemExit) as exc_info:
            with main.reporting(logger):
                raise prep.PrepError("frame 3: non-finite hand_q")
        assert exc_info.value.code == 1
        assert caplog.record_tuples == [
            ("tests.dexc", logging.ERROR, "prep: frame 3: non-finite hand_q")
        ]

    @staticmethod
    def test_os_error(caplog):
        logger = logging.getLogger("tests.dexc")
        with pytest.raises(SystemExit):
            with main.reporting(logger):
                raise FileNotFoundError(2, "No such file or directory", "x.json")
        assert caplog.record_tuples == [
            ("tests.dexc", logging.ERROR, "io: No such file or directory: x.json")
        ]

    @staticmethod
    def test_other_errors_pass():
        with pytest.raises(RuntimeError):
            with main.reporting(logging.getLogger("tests.dexc")):
                raise RuntimeError("bug")


def test_run_dir():
    cfg = config.RunConfig(seed=4)
    assert main.run_dir(pathlib.Path("runs"), cfg, "task-only") == pathlib.Path(
        "runs/lift-open-close/task-only/seed-4"
    )
    cfg = config.RunConfig(task=config.TaskConfig(demo="clips/mug.json"))
    assert main.demo_path(pathlib.Path("runs"), cfg) == pathlib.Path("clips/mug.json")
    assert main.task_label(cfg) == "mug"


def invoke(cli_runner, *args, **kwargs):
    return cli_runner.invoke(main.main, list(args), **kwargs)


class TestGenDemo:
    @staticmethod
    def test_writes_demo(cli_runner, project_dir):
        result = invoke(cli_runner, "gen-demo", "--script", "lift", "--frames", FRAMES)
        assert result.exit_code == 0
        assert result.stdout == "T=40 dt=0.02 script=lift runs/demos/lift.json\n"
        clip = demo.load_demo(project_dir / "runs" / "demos" / "lift.json")
        assert clip.frames == 40

    @staticmethod
    def test_missing_script(cli_runner):
        result = invoke(cli_runner, "gen-demo")
        assert result.exit_code == 2

    @staticmethod
    def test_exists(cli_runner, caplog):
        args = ["gen-demo", "--script", "lift", "--frames", FRAMES]
        assert invoke(cli_runner, *args).exit_code == 0
        caplog.clear()
        result = invoke(cli_runner, *args)
        assert result.exit_code == 1
        assert caplog.record_tuples == [
            (
                "dexc",
                logging.ERROR,
                "exists, use --force to overwrite: runs/demos/lift.json",
            )
        ]
        assert invoke(cli_runner, *args, "--force").exit_code == 0

    @staticmethod
    def test_output_root_from_environment(cli_runner, project_dir):
        result = invoke(
            cli_runner,
            "gen-demo",
            "--script",
            "lift",
            "--frames",
            FRAMES,
            env={"DEXC_OUT": "elsewhere"},
        )
        assert result.exit_code == 0
        assert (project_dir / "elsewhere" / "demos" / "lift.json").is_file()


class TestErrors:
    @staticmethod
    def test_bad_override(cli_runner, caplog):
        result = invoke(cli_runner, "--set", "bogus", "gen-demo", "--script", "lift")
        assert result.exit_code == 1
        assert caplog.record_tuples == [
            (
                "dexc",
                logging.ERROR,
                "config: override must look like section.key=value: bogus",
            )
        ]

    @staticmethod
    def test_missing_config(cli_runner, caplog):
        result = invoke(cli_runner, "--config", "nope.toml", "prep")
        assert result.exit_code == 1
        assert caplog.record_tuples == [
            ("dexc", logging.ERROR, "config: configuration file not found: nope.toml")
        ]

    @staticmethod
    def test_prep_without_demo(cli_runner, caplog):
        result = invoke(cli_runner, "prep")
        assert result.exit_code == 1
        assert caplog.record_tuples == [
            (
                "dexc",
                logging.ERROR,
                "demo: demo not found, run gen-demo first: "
                "runs/demos/lift-open-close.json",
            )
        ]

    @staticmethod
    def test_report_not_a_directory(cli_runner, caplog):
        result = invoke(cli_runner, "report", "nowhere")
        assert result.exit_code == 1
        assert caplog.record_tuples == [
            ("dexc", logging.ERROR, "evaluation: not a directory: nowhere")
        ]


class TestPipeline:
    @staticmethod
    @pytest.fixture
    def demo_file(cli_runner, project_dir) -> pathlib.Path:
        result = invoke(cli_runner, "gen-demo", "--script", "lift", "--frames", FRAMES)
        assert result.exit_code == 0
        return project_dir / "runs" / "demos" / "lift.json"

    @staticmethod
    @pytest.fixture
    def prepped(cli_runner, demo_file) -> pathlib.Path:
        result = invoke(cli_runner, *LIFT, "prep")
        assert result.exit_code == 0
        return demo_file

    @staticmethod
    def test_prep_is_reproducible(cli_runner, prepped):
        sidecars = [
            prep.sidecar_path(prepped, suffix)
            for suffix in (prep.RETARGET_SUFFIX, prep.CONTACTS_SUFFIX)
        ]
        before = [path.read_bytes() for path in sidecars]
        assert invoke(cli_runner, *LIFT, "prep").exit_code == 0
        assert [path.read_bytes() for path in sidecars] == before
        contacts = json.loads(sidecars[1].read_text())
        assert contacts["T"] == 40

    @staticmethod
    @pytest.mark.parametrize("gamma", [0.005, 0.03])
    def test_prep_gamma(cli_runner, prepped, gamma):
        sidecar = prep.sidecar_path(prepped, prep.CONTACTS_SUFFIX)
        default = json.loads(sidecar.read_text())
        assert default["gamma"] == 0.01
        result = invoke(cli_runner, *LIFT, "prep", "--gamma", str(gamma))
        assert result.exit_code == 0
        contacts = json.loads(sidecar.read_text())
        assert contacts["gamma"] == gamma
        assert contacts["config_hash"] != default["config_hash"]
        cfg = config.load(None, [*LIFT[1:], f"prep.gamma={gamma}"])
        assert contacts["config_hash"] == cfg.config_hash

    @staticmethod
    def test_prep_gamma_must_be_positive(cli_runner, demo_file, caplog):
        result = invoke(cli_runner, *LIFT, "prep", "--gamma", "0")
        assert result.exit_code == 1
        assert caplog.record_tuples == [
            ("dexc", logging.ERROR, "config: prep: gamma must be positive")
        ]

    @staticmethod
    def test_train_needs_prep(cli_runner, demo_file, caplog):
        result = invoke(cli_runner, *LIFT, "train")
        assert result.exit_code == 1
        assert caplog.record_tuples == [
            (
                "dexc",
                logging.ERROR,
                "prep: missing preprocessing output, run prep first: "
                "runs/demos/lift.retarget.json",
            )
        ]

    @staticmethod
    def test_eval_kinematics_only(cli_runner, prepped, project_dir):
        result = invoke(
            cli_runner, *LIFT, "eval", "--mode", "kinematics-only", "--episodes", "2"
        )
        assert result.exit_code == 0
        out_dir = project_dir / "runs" / "lift" / "kinematics-only" / "seed-0"
        report = json.loads((out_dir / "report.json").read_text())
        assert report["mode"] == "kinematics-only"
        assert len(report["lengths"]) == 2
        (row,) = artifacts.read_csv(out_dir / "summary.csv", logging.getLogger("t"))
        assert row["method"] == "kinematics-only"
        assert row["task"] == "lift"

    @staticmethod
    def test_report_over_seeds(cli_runner, prepped, project_dir):
        for seed in range(3):
            result = invoke(
                cli_runner,
                *LIFT,
                "--set",
                f"seed={seed}",
                "eval",
                "--mode",
                "kinematics-only",
                "--episodes",
                "1",
            )
            assert result.exit_code == 0
        result = invoke(cli_runner, "report", "runs/lift")
        assert result.exit_code == 0
        assert result.stdout.startswith("kinematics-only lift n=3 add_auc=")
        rows = artifacts.read_csv(
            project_dir / "runs" / "report.csv", logging.getLogger("t")
        )
        assert [row["n"] for row in rows] == ["3"]

    @staticmethod
    def test_train_then_eval(cli_runner, prepped, project_dir):
        result = invoke(cli_runner, *LIFT, *TINY_TRAINING, "train")
        assert result.exit_code == 0
        out_dir = project_dir / "runs" / "lift" / "dexmachina" / "seed-0"
        for name in ("config.json", "train.csv", "curriculum.csv", "last.npz"):
            assert (out_dir / name).is_file()
        result = invoke(cli_runner, *LIFT, *TINY_TRAINING, "eval", "--episodes", "1")
        assert result.exit_code == 0
        assert result.stdout.startswith("dexmachina add_auc=")
        assert (out_dir / "report.json").is_file()
