import pytest

from worldgen import make_world


@pytest.fixture
def small_world():
    return make_world()
