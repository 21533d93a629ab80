from pathlib import Path

import pytest

from config import build_config
from scene_core import load_scene

SCENES = Path(__file__).resolve().parent.parent / "scenes"


@pytest.fixture(scope="session")
def scenes_dir():
    return SCENES


@pytest.fixture(scope="session")
def box_scene():
    return load_scene(SCENES / "box.txt")


@pytest.fixture(scope="session")
def peaks_scene():
    return load_scene(SCENES / "peaks.txt")


@pytest.fixture(scope="session")
def empty_scene():
    return load_scene(SCENES / "empty.txt")


@pytest.fixture
def small_cfg():
    """Config factory for images small enough to render in pure Python within a test."""
    def make(**overrides):
        base = dict(hres=16, yres=17, ambient_divisions=4, max_specular_depth=2)
        base.update(overrides)
        return build_config(**base)
    return make
