# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import os
import pathlib
from typing import Iterator
from typing import Optional

import numpy as np
import pytest
from click import testing

from dexc import assets
from dexc import config
from dexc import demo
from dexc import env
from dexc import prep
from dexc import sim
from tests.dexc import file_testing

SHORT_FRAMES = 40


@pytest.fixture
def cli_runner() -> testing.CliRunner:
    return testing.CliRunner()


@pytest.fixture
def dexc_toml() -> Optional[str]:
    return None


@pytest.fixture
def pyproject_toml() -> Optional[str]:
    return None


@pytest.fixture
def project_dir_content(dexc_toml, pyproject_toml) -> file_testing.DirContent:
    return {"dexc.toml": dexc_toml, "pyproject.toml": pyproject_toml}


@pytest.fixture(autouse=True)
def project_dir(tmp_path, project_dir_content) -> Iterator[pathlib.Path]:
    project_dir = tmp_path / "project"
    file_testing.write_content(project_dir, project_dir_content)
    cwd = pathlib.Path.cwd()
    try:
        os.chdir(project_dir)
        yield project_dir
    finally:
        os.chdir(cwd)


@pytest.fixture(scope="session")
def obj() -> assets.ObjectModel:
    return assets.box_with_lid()


@pytest.fixture(scope="session")
def hand() -> assets.HandModel:
    return assets.toy_hand()


@pytest.fixture(scope="session")
def clip(obj, hand) -> demo.DemoClip:
    return demo.generate_demo("lift-open-close", obj, hand, SHORT_FRAMES, 0.02)


@pytest.fixture
def sim_config() -> config.SimConfig:
    return config.SimConfig()


@pytest.fixture
def simulator(obj, hand, sim_config) -> sim.Simulator:
    return sim.Simulator(obj, hand, sim_config, 0.02)


@pytest.fixture(scope="session")
def empty_annotations(clip, hand) -> tuple[prep.ContactAnnotation, ...]:
    shape = (clip.frames, assets.PART_COUNT, hand.link_count)
    annotation = prep.ContactAnnotation(
        contacts=np.zeros(shape + (3,)),
        mask=np.zeros(shape, dtype=bool),
        gamma=0.01,
        n_c=50,
        d_max=0.1,
    )
    return annotation, annotation


@pytest.fixture(scope="session")
def reference(clip, empty_annotations) -> env.Reference:
    """The clip's own joints as replay output, with no contacts."""
    retarget = prep.Retarget(
        joints=clip.hand_joints, keypoints=clip.hand_keypoints, max_penetration=0.0
    )
    return env.Reference.build(clip, retarget, empty_annotations)
