import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

import helpers  # noqa: E402
from crowdskills import scene, skills  # noqa: E402


@pytest.fixture(scope="session")
def training_sets():
    return [helpers.load_scene_trajectories(name) for name in helpers.TRAINING_SCENES]


@pytest.fixture(scope="session")
def training_segments(training_sets):
    return helpers.canonical_training_segments(training_sets)


@pytest.fixture(scope="session")
def codebook64(training_segments):
    return skills.fit_codebook(training_segments, k=64, seed=0)


@pytest.fixture(scope="session")
def codebook16(training_segments):
    return skills.fit_codebook(training_segments, k=16, seed=3)


@pytest.fixture(scope="session")
def zara01_gt():
    return helpers.load_scene_trajectories("zara01")


@pytest.fixture(scope="session")
def zara01_scene():
    return scene.load_bundled_scene("zara01")


@pytest.fixture(scope="session")
def crossing_scene():
    return scene.load_bundled_scene("crossing")
