"""Scoring of reconstructed volumes against the known scene, and transmitter localization."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .combine import CombinedImage
from .forward import MeasurementDataCube, SceneDescription
from .grids import ImagingVolume, plane_sample_positions

__all__ = [
    "DB_FLOOR",
    "GroundTruthMask",
    "MetricsReport",
    "TxEstimate",
    "coverage",
    "ghost_peak_index",
    "ghost_to_target_ratio",
    "localization_error",
    "mip",
    "normalized_entropy",
    "peak_index",
    "peak_sidelobe_ratio",
    "peak_to_artifact_ratio",
    "score_image",
    "target_peak_index",
    "tx_localize",
]

# -inf dB is reported as this value
DB_FLOOR = -99.0

_AXES = {"x": 2, "y": 1, "z": 0}


def _intensity(image) -> np.ndarray:
    if isinstance(image, CombinedImage):
        return image.intensity
    return np.asarray(image, dtype=float)


def _ratio_db(num: float, den: float) -> float:
    if num <= 0:
        return DB_FLOOR
    if den <= 0:
        return -DB_FLOOR
    return max(DB_FLOOR, float(20 * np.log10(num / den)))


def _ball(radius: int) -> np.ndarray:
    r = int(radius)
    g = np.mgrid[-r:r + 1, -r:r + 1, -r:r + 1]
    return np.sum(g**2, axis=0) <= r * r


@dataclass(frozen=True)
class GroundTruthMask:
    """Voxels occupied by the scene geometry, plus the ghost-exclusion zone around them.

    ``core`` marks voxels hit by the geometry itself; ``target`` is ``core``
    dilated by ``dilation`` voxels; ``exclusion`` grows ``target`` by a
    further ``ghost_radius`` voxels.  Anything outside ``exclusion`` is a
    candidate ghost.
    """

    core: np.ndarray
    target: np.ndarray
    exclusion: np.ndarray
    dilation: int = 1
    ghost_radius: int = 2

    @classmethod
    def from_points(cls, points: np.ndarray, volume: ImagingVolume,
                    dilation: int = 1, ghost_radius: int = 2) -> "GroundTruthMask":
        core = np.zeros(volume.shape, dtype=bool)
        if len(points):
            idx, inside = volume.nearest_index(points)
            idx = idx[inside]
            core[idx[:, 0], idx[:, 1], idx[:, 2]] = True
        target = ndimage.binary_dilation(core, _ball(1), iterations=dilation) if dilation else core.copy()
        exclusion = (ndimage.binary_dilation(target, _ball(1), iterations=ghost_radius)
                     if ghost_radius else target.copy())
        return cls(core, target, exclusion, dilation, ghost_radius)

    @classmethod
    def from_scene(cls, scene: SceneDescription, volume: ImagingVolume,
                   dilation: int = 1, ghost_radius: int = 2) -> "GroundTruthMask":
        # sample plates finely enough that no voxel on a surface is skipped
        pitch = min(d for d in volume.spacing if d > 0) if max(volume.spacing) > 0 else 1e-3
        points = scene.geometry_points(density=2.0 / pitch)
        return cls.from_points(points, volume, dilation, ghost_radius)

    @property
    def ghost_region(self) -> np.ndarray:
        return ~self.exclusion

    def _require(self):
        if not self.target.any():
            raise ValueError("ground-truth mask is empty")


def mip(image, axis: str = "y") -> np.ndarray:
    """Maximum intensity projection along ``axis``.

    The map keeps the remaining axes in (z, y, x) order: ``axis="y"`` gives
    an (nz, nx) xz-map, ``axis="z"`` an (ny, nx) top view.
    """
    if axis not in _AXES:
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    vol = _intensity(image)
    if vol.size == 0:
        raise ValueError("empty image")
    return vol.max(axis=_AXES[axis])


def peak_index(image) -> tuple[int, int, int]:
    vol = _intensity(image)
    return tuple(int(i) for i in np.unravel_index(np.argmax(vol), vol.shape))


def _masked_argmax(vol: np.ndarray, mask: np.ndarray) -> tuple[int, int, int] | None:
    if not mask.any():
        return None
    flat = np.where(mask, vol, -np.inf)
    return tuple(int(i) for i in np.unravel_index(np.argmax(flat), vol.shape))


def target_peak_index(image, truth: GroundTruthMask):
    """Brightest voxel inside the (dilated) target."""
    truth._require()
    return _masked_argmax(_intensity(image), truth.target)


def ghost_peak_index(image, truth: GroundTruthMask):
    """Brightest voxel outside the ghost-exclusion zone, or None if there is no such voxel."""
    return _masked_argmax(_intensity(image), truth.ghost_region)


def ghost_to_target_ratio(image, truth: GroundTruthMask) -> float:
    """Strongest ghost over strongest target response, in dB (clamped at -99 dB)."""
    truth._require()
    vol = _intensity(image)
    inside = vol[truth.target].max()
    outside = vol[truth.ghost_region].max() if truth.ghost_region.any() else 0.0
    if inside <= 0:
        return -DB_FLOOR if outside > 0 else 0.0
    return _ratio_db(outside, inside)


def peak_to_artifact_ratio(image, truth: GroundTruthMask) -> float:
    """Strongest target response over the strongest response outside the exclusion zone, in dB.

    Uses the ground truth to separate mainlobe from artifacts, so it stays
    meaningful for extended targets and symmetric layouts where a
    fixed-radius sidelobe search degenerates.  Equals minus
    :func:`ghost_to_target_ratio`.
    """
    return -ghost_to_target_ratio(image, truth)


def peak_sidelobe_ratio(image, exclusion_radius: int = 3) -> float:
    """Peak over the highest value farther than ``exclusion_radius`` voxels from it, in dB."""
    vol = _intensity(image)
    peak = vol.max()
    if peak <= 0:
        return 0.0
    pk = np.array(peak_index(vol))
    grid = np.indices(vol.shape)
    d2 = sum((grid[i] - pk[i]) ** 2 for i in range(3))
    far = d2 > exclusion_radius**2
    side = vol[far].max() if far.any() else 0.0
    return -_ratio_db(side, peak)


def coverage(image, truth: GroundTruthMask, threshold_db: float = -10.0) -> float:
    """Fraction of target voxels brighter than ``threshold_db`` relative to the image peak."""
    if not threshold_db < 0:
        raise ValueError("threshold_db must be negative")
    truth._require()
    vol = _intensity(image)
    peak = vol.max()
    if peak <= 0:
        return 0.0
    level = peak * 10 ** (threshold_db / 20)
    return float(np.count_nonzero(vol[truth.target] > level) / np.count_nonzero(truth.target))


def normalized_entropy(image) -> float:
    """Shannon entropy of the intensity normalised to unit sum, divided by log(voxel count)."""
    vol = _intensity(image).ravel()
    total = vol.sum()
    if total <= 0 or vol.size < 2:
        return 0.0
    q = vol[vol > 0] / total
    return float(-np.sum(q * np.log(q)) / np.log(vol.size))


def localization_error(image, points: np.ndarray, volume: ImagingVolume) -> float:
    """Distance (m) from the image peak to the nearest ground-truth point."""
    pos = volume.position(peak_index(image))
    pts = np.atleast_2d(points)
    return float(np.min(np.linalg.norm(pts - pos, axis=1)))


def voxel_distance(a, b) -> float:
    """Euclidean distance between two voxel indices, in voxel units."""
    return float(np.linalg.norm(np.subtract(a, b)))


@dataclass
class MetricsReport:
    label: str
    peak_x: float
    peak_y: float
    peak_z: float
    localization_error_m: float
    ghost_to_target_db: float
    coverage: float
    entropy: float
    peak_sidelobe_db: float

    COLUMNS = (
        "label", "peak_x", "peak_y", "peak_z", "localization_error_m",
        "ghost_to_target_db", "coverage", "entropy", "peak_sidelobe_db",
    )

    def row(self) -> list:
        d = asdict(self)
        return [d[c] for c in self.COLUMNS]


def score_image(image: CombinedImage, scene: SceneDescription, label: str = "",
                truth: GroundTruthMask | None = None, threshold_db: float = -10.0) -> MetricsReport:
    """All scalar metrics for one combined image."""
    volume = image.volume
    if truth is None:
        truth = GroundTruthMask.from_scene(scene, volume)
    pos = volume.position(peak_index(image))
    pitch = min(d for d in volume.spacing if d > 0) if max(volume.spacing) > 0 else 1e-3
    points = scene.geometry_points(density=2.0 / pitch)
    has_truth = truth.target.any() and len(points) > 0
    return MetricsReport(
        label=label,
        peak_x=float(pos[0]), peak_y=float(pos[1]), peak_z=float(pos[2]),
        localization_error_m=localization_error(image, points, volume) if has_truth else float("nan"),
        ghost_to_target_db=ghost_to_target_ratio(image, truth) if has_truth else float("nan"),
        coverage=coverage(image, truth, threshold_db) if has_truth else float("nan"),
        entropy=normalized_entropy(image),
        peak_sidelobe_db=peak_sidelobe_ratio(image),
    )


# -------------------------------------------------------------- Tx localization


@dataclass(frozen=True)
class TxEstimate:
    position: np.ndarray
    score: float
    on_boundary: bool


def tx_localize(cube: MeasurementDataCube, n: int, search_grid: Sequence[np.ndarray],
                chunk: int = 256) -> TxEstimate:
    """Matched-filter search for the position of transmitter ``n``.

    ``search_grid`` is a triple of 1-D coordinate axes (xs, ys, zs).  Each
    candidate is scored by the coherent energy of the incident field after
    removing the candidate-to-probe propagation phase at every frequency;
    the best candidate is returned, flagged when it sits on the grid
    boundary.
    """
    if not cube.incident_included:
        raise ValueError("transmitter localization needs data with the incident field included")
    xs, ys, zs = (np.asarray(a, float) for a in search_grid)
    cand = np.stack(np.meshgrid(zs, ys, xs, indexing="ij"), axis=-1).reshape(-1, 3)[:, ::-1]
    samples = plane_sample_positions(cube.plane)
    data = cube.values[n]  # (F, P, M)
    ks = cube.grid.k
    scores = np.empty(len(cand))
    for i in range(0, len(cand), chunk):
        c = cand[i:i + chunk]
        R = np.linalg.norm(c[:, None, :] - samples[None, :, :], axis=-1)  # (C, M)
        acc = np.zeros((len(c), data.shape[1]), dtype=complex)
        for f, k in enumerate(ks):
            acc += np.exp(1j * k * R) @ data[f].T
        scores[i:i + chunk] = np.sum(np.abs(acc) ** 2, axis=1)
    best = int(np.argmax(scores))
    iz, iy, ix = np.unravel_index(best, (len(zs), len(ys), len(xs)))
    boundary = any(
        len(ax) > 1 and i in (0, len(ax) - 1) for i, ax in ((ix, xs), (iy, ys), (iz, zs))
    )
    return TxEstimate(cand[best].copy(), float(scores[best]), bool(boundary))
