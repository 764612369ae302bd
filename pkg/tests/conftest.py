import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nfpassive import (
    ImagingVolume,
    MeasurementPlane,
    PointScatterer,
    SceneDescription,
    TxSource,
    make_frequency_grid,
    simulate,
)

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_plane():
    return MeasurementPlane(0.5, -0.4, 0.4, -0.4, 0.4, 41, 41)


@pytest.fixture(scope="session")
def small_grid():
    return make_frequency_grid(6e9, 10e9, 5)


@pytest.fixture(scope="session")
def two_tx():
    return (TxSource((-0.25, 0.0, 0.25)), TxSource((0.25, 0.0, 0.25)))


@pytest.fixture(scope="session")
def point_scene():
    return SceneDescription((PointScatterer((0.0, 0.0, 0.0), 1.0),), (), (), False, False)


@pytest.fixture(scope="session")
def point_cube(point_scene, two_tx, small_grid, small_plane):
    return simulate(point_scene, two_tx, small_grid, small_plane)


@pytest.fixture(scope="session")
def small_volume(small_plane):
    return ImagingVolume.on_plane_lattice(small_plane, (-0.06, 0.06), (-0.06, 0.06), (-0.05, 0.05), 0.01, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_cache = {}


def SCENE_CACHE():
    """Small two-Tx point-scatterer cube for hypothesis tests (fixtures do not mix with @given)."""
    if "pt" not in _cache:
        grid = make_frequency_grid(6e9, 10e9, 3)
        plane = MeasurementPlane(0.5, -0.4, 0.4, -0.4, 0.4, 41, 41)
        scene = SceneDescription((PointScatterer((0.0, 0.0, 0.0), 1.0),), (), (), False, False)
        cube = simulate(scene, (TxSource((-0.25, 0.0, 0.25)), TxSource((0.25, 0.0, 0.25))), grid, plane)
        vol = ImagingVolume.on_plane_lattice(plane, (-0.04, 0.04), (-0.04, 0.04), (-0.02, 0.02), 0.01, 2)
        _cache["pt"] = (cube, vol, grid)
    return _cache["pt"]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
