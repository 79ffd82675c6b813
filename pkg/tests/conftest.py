import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from focalsplit.geometry import CameraIntrinsics  # noqa: E402
from focalsplit.meshes import cube, icosphere, quad  # noqa: E402


@pytest.fixture
def camera():
    return CameraIntrinsics(500.0, 320.0, 240.0, 640, 480)


@pytest.fixture
def cube_mesh():
    return cube()


@pytest.fixture
def quad_mesh():
    return quad()


@pytest.fixture
def sphere_mesh():
    return icosphere()
