import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from nfpassive.analysis import (
    DB_FLOOR,
    GroundTruthMask,
    MetricsReport,
    coverage,
    ghost_peak_index,
    ghost_to_target_ratio,
    localization_error,
    mip,
    normalized_entropy,
    peak_index,
    peak_sidelobe_ratio,
    peak_to_artifact_ratio,
    score_image,
    target_peak_index,
    tx_localize,
)
from nfpassive.combine import CombinedImage
from nfpassive.forward import PointScatterer, SceneDescription, simulate
from nfpassive.grids import ImagingVolume, MeasurementPlane, TxSource, make_frequency_grid

VOL = ImagingVolume((-0.1, 0.1), (-0.1, 0.1), (-0.1, 0.1), 21, 21, 21)
POINT = np.array([[0.0, 0.0, 0.0]])
TRUTH = GroundTruthMask.from_points(POINT, VOL)

volumes = arrays(np.float64, (4, 5, 6), elements=st.floats(0, 1, allow_subnormal=False))


def _img(arr, vol=None):
    vol = vol or ImagingVolume((0, 0.5), (0, 0.4), (0, 0.3), arr.shape[2], arr.shape[1], arr.shape[0])
    return CombinedImage.from_intensity(np.asarray(arr, float), vol, [], "coherent")


def test_mask_layers():
    assert TRUTH.core.sum() == 1
    assert TRUTH.target.sum() == 7  # radius-1 ball
    assert TRUTH.exclusion.sum() > TRUTH.target.sum()
    assert not (TRUTH.ghost_region & TRUTH.target).any()
    # ghost radius counts from the target edge
    idx = tuple(VOL.nearest_index(POINT)[0][0])
    assert TRUTH.exclusion[idx[0], idx[1], idx[2] + 3] and not TRUTH.exclusion[idx[0], idx[1], idx[2] + 4]


def test_mask_from_scene_plate():
    from nfpassive.scenarios import dihedral_plates
    vol = ImagingVolume((-0.3, 0.3), (0.0, 0.0), (-0.1, 0.3), 41, 1, 41)
    scene = SceneDescription((), dihedral_plates(), (), True, True)
    truth = GroundTruthMask.from_scene(scene, vol)
    core = truth.core[:, 0, :]
    # the V of the two plates: every x column between +-0.2 has a core voxel
    cols = np.flatnonzero(core.any(axis=0))
    assert vol.xs[cols].min() <= -0.2 and vol.xs[cols].max() >= 0.2
    assert np.all(np.diff(cols) == 1)


def test_mip_single_voxel():
    a = np.zeros((4, 5, 6))
    a[2, 3, 1] = 0.7
    m = mip(_img(a), "y")
    assert m.shape == (4, 6)
    assert np.count_nonzero(m) == 1 and m[2, 1] == 1.0
    assert mip(_img(a), "z").shape == (5, 6)
    assert mip(_img(a), "x").shape == (4, 5)
    with pytest.raises(ValueError):
        mip(_img(a), "w")


@given(volumes, volumes)
def test_mip_commutes_with_max(a, b):
    for axis in "xyz":
        np.testing.assert_array_equal(mip(np.maximum(a, b), axis), np.maximum(mip(a, axis), mip(b, axis)))


@given(arrays(np.float64, (1, 5, 6), elements=st.floats(0, 1)))
def test_mip_of_flat_volume_is_the_slice(a):
    np.testing.assert_array_equal(mip(a, "z"), a[0])


def test_gtr_sentinel_and_zero():
    a = np.zeros(VOL.shape)
    a[TRUTH.target] = 1.0
    assert ghost_to_target_ratio(a, TRUTH) == DB_FLOOR
    a[0, 0, 0] = 1.0
    assert ghost_to_target_ratio(a, TRUTH) == pytest.approx(0.0)
    a[0, 0, 0] = 0.1
    assert ghost_to_target_ratio(a, TRUTH) == pytest.approx(-20.0)


@given(st.floats(1e-6, 1e6))
def test_gtr_scale_invariant(s):
    a = np.random.default_rng(0).random(VOL.shape)
    assert ghost_to_target_ratio(s * a, TRUTH) == pytest.approx(ghost_to_target_ratio(a, TRUTH), abs=1e-9)


def test_gtr_empty_mask():
    empty = GroundTruthMask.from_points(np.empty((0, 3)), VOL)
    with pytest.raises(ValueError):
        ghost_to_target_ratio(np.ones(VOL.shape), empty)
    with pytest.raises(ValueError):
        coverage(np.ones(VOL.shape), empty)


def test_peak_indices():
    a = np.zeros(VOL.shape)
    a[10, 10, 10] = 0.5
    a[0, 1, 2] = 0.9
    assert peak_index(a) == (0, 1, 2)
    assert target_peak_index(a, TRUTH) == (10, 10, 10)
    assert ghost_peak_index(a, TRUTH) == (0, 1, 2)
    assert peak_to_artifact_ratio(a, TRUTH) == pytest.approx(20 * np.log10(0.5 / 0.9))


def test_coverage_trivial_cases():
    assert coverage(np.ones(VOL.shape), TRUTH) == 1.0
    assert coverage(np.zeros(VOL.shape), TRUTH) == 0.0
    with pytest.raises(ValueError):
        coverage(np.ones(VOL.shape), TRUTH, threshold_db=0.0)


@given(st.floats(-60, -0.1), st.floats(-60, -0.1))
def test_coverage_monotone_in_threshold(t1, t2):
    a = np.random.default_rng(5).random(VOL.shape)
    lo, hi = sorted((t1, t2))
    assert coverage(a, TRUTH, lo) >= coverage(a, TRUTH, hi)


@given(st.integers(0, 2**32 - 1))
def test_coverage_monotone_under_pointwise_max(seed):
    rng = np.random.default_rng(seed)
    a = rng.random(VOL.shape)
    b = rng.random(VOL.shape) * a.max()  # keep the peak fixed
    assert coverage(np.maximum(a, b), TRUTH) >= coverage(a, TRUTH)


def test_entropy_bounds():
    n = VOL.shape
    assert normalized_entropy(np.ones(n)) == pytest.approx(1.0)
    spike = np.zeros(n)
    spike[3, 3, 3] = 1
    assert normalized_entropy(spike) == 0.0
    assert normalized_entropy(np.zeros(n)) == 0.0


@given(volumes, st.floats(1e-3, 1e3))
def test_entropy_scale_free(a, s):
    assert normalized_entropy(s * a) == pytest.approx(normalized_entropy(a), abs=1e-9)


def test_peak_sidelobe_ratio():
    a = np.zeros(VOL.shape)
    a[10, 10, 10] = 1.0
    a[10, 10, 12] = 0.9  # inside the 3-voxel exclusion
    a[10, 10, 15] = 0.1
    assert peak_sidelobe_ratio(a) == pytest.approx(20.0)


def test_localization_error():
    a = np.zeros(VOL.shape)
    a[10, 10, 13] = 1.0
    assert localization_error(a, POINT, VOL) == pytest.approx(0.03)


def test_score_image_report():
    a = np.zeros(VOL.shape)
    a[10, 10, 10] = 1.0
    scene = SceneDescription((PointScatterer((0, 0, 0)),), (), (), False, False)
    r = score_image(_img(a, VOL), scene, "x")
    assert isinstance(r, MetricsReport)
    assert r.localization_error_m == pytest.approx(0.0, abs=1e-12)
    assert r.coverage == pytest.approx(1 / 7)
    assert len(r.row()) == len(MetricsReport.COLUMNS)


# ------------------------------------------------------- Tx localization

LOC_PLANE = MeasurementPlane(0.0, -0.3, 0.3, -0.3, 0.3, 21, 21)
LOC_GRID = make_frequency_grid(6e9, 10e9, 5)


def _incident_cube(pos):
    return simulate(SceneDescription(), [TxSource(pos)], LOC_GRID, LOC_PLANE, include_incident=True)


def _axes(center, step=0.02, half=3):
    return [center[i] + step * np.arange(-half, half + 1) for i in range(3)]


def brute_force_focus(cube, axes):
    """Independent scorer: explicit loops over candidates and frequencies."""
    from nfpassive.grids import plane_sample_positions
    pts = plane_sample_positions(cube.plane)
    best, arg = -1.0, None
    for z in axes[2]:
        for y in axes[1]:
            for x in axes[0]:
                R = np.linalg.norm(pts - [x, y, z], axis=1)
                s = 0.0
                for p in range(len(cube.components)):
                    s += abs(sum(np.sum(cube.values[0, f, p] * np.exp(1j * k * R))
                                 for f, k in enumerate(cube.grid.k))) ** 2
                if s > best:
                    best, arg = s, np.array([x, y, z])
    return arg


def test_tx_localize_on_axis_dipole():
    truth = np.array([0.0, 0.0, 0.4])
    cube = _incident_cube(truth)
    axes = _axes(truth + [0.004, -0.006, 0.003])
    est = tx_localize(cube, 0, axes)
    assert np.abs(est.position - truth).max() <= 0.02
    assert not est.on_boundary
    np.testing.assert_allclose(est.position, brute_force_focus(cube, axes))


def test_tx_localize_global_scale_invariant():
    truth = np.array([0.05, -0.03, 0.35])
    cube = _incident_cube(truth)
    axes = _axes(truth)
    a = tx_localize(cube, 0, axes)
    cube.values *= 3.7 * np.exp(1.1j)
    b = tx_localize(cube, 0, axes)
    np.testing.assert_array_equal(a.position, b.position)


def test_tx_localize_boundary_flag():
    truth = np.array([0.0, 0.0, 0.4])
    cube = _incident_cube(truth)
    est = tx_localize(cube, 0, _axes(truth + [0.1, 0, 0]))
    assert est.on_boundary


def test_tx_localize_needs_incident(point_cube):
    with pytest.raises(ValueError):
        tx_localize(point_cube, 0, _axes([0, 0, 0.25]))
