"""
Shared pytest fixtures for the voxup test suite.
"""

import pytest

from src.fixtures import fixture
from src.partition import look_at


@pytest.fixture
def sphere():
    return fixture("sphere_s2").mesh


@pytest.fixture
def torus():
    return fixture("torus_thin").mesh


@pytest.fixture
def front_camera():
    """128x128 camera on the -z axis looking at the origin."""
    return look_at((0.0, 0.0, -2.0), width=128, height=128)
