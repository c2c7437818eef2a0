import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tileray.demoscene import write_demo_scene
from tileray.sceneio import load_scene


@pytest.fixture(scope="session")
def micro_cell_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("micro_cell")
    write_demo_scene(d, mesh_instances=1)
    return d


@pytest.fixture(scope="session")
def micro_cell(micro_cell_dir):
    """The acceptance fixture scene: one icosphere-style proxy mesh,
    four square + four cube tiles, three molecule types."""
    return load_scene(micro_cell_dir / "scene.json")
