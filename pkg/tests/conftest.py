import numpy as np
import pytest

from riesz_flow import build_intertwining_kernel, build_sphere

SIGMA = 0.25


@pytest.fixture(scope="session")
def geo64():
    return build_sphere(1, 64)


@pytest.fixture(scope="session")
def geo128():
    return build_sphere(1, 128)


@pytest.fixture(scope="session")
def geo256():
    return build_sphere(1, 256)


@pytest.fixture(scope="session")
def ker64(geo64):
    return build_intertwining_kernel(geo64, SIGMA)


@pytest.fixture(scope="session")
def ker128(geo128):
    return build_intertwining_kernel(geo128, SIGMA)


@pytest.fixture(scope="session")
def ker256(geo256):
    return build_intertwining_kernel(geo256, SIGMA)


def angles(geom):
    return np.arctan2(geom.nodes[:, 1], geom.nodes[:, 0])
