"""Single-frequency imaging by plane-wave-spectrum backpropagation.

A measured planar component is transformed into its angular spectrum, each
propagating plane wave is carried back to the requested depth, and the
result is transformed back onto the plane lattice (optionally refined by
zero-padding the spectrum).  Evanescent waves are dropped.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.fft as sfft

from .forward import MeasurementDataCube
from .grids import FieldComponent, ImagingVolume, MeasurementPlane

__all__ = [
    "ImageSet",
    "ImageVolume",
    "PlaneWaveSpectrum",
    "backpropagate",
    "backpropagation_transfer",
    "propagate",
    "pws_decompose",
    "pws_recompose",
    "single_frequency_image",
]


@dataclass(frozen=True)
class PlaneWaveSpectrum:
    """Angular spectrum of one planar field in unshifted DFT order.

    ``values[iy, ix]`` is the weight of the plane wave with transverse
    wavenumbers ``(kx[ix], ky[iy])``; the phase reference is the plane's
    first sample ``(x_min, y_min)``.
    """

    values: np.ndarray
    kx: np.ndarray
    ky: np.ndarray
    k: float
    z_ref: float

    @property
    def kz(self) -> np.ndarray:
        """Longitudinal wavenumber; NaN marks evanescent bins."""
        kt2 = self.kx[None, :] ** 2 + self.ky[:, None] ** 2
        with np.errstate(invalid="ignore"):
            return np.where(kt2 <= self.k**2, np.sqrt(self.k**2 - kt2), np.nan)

    @property
    def propagating(self) -> np.ndarray:
        return self.kx[None, :] ** 2 + self.ky[:, None] ** 2 <= self.k**2


def spatial_wavenumbers(n: int, d: float) -> np.ndarray:
    return 2 * np.pi * np.fft.fftfreq(n, d)


def pws_decompose(plane_field: np.ndarray, plane: MeasurementPlane, k: float) -> PlaneWaveSpectrum:
    field = np.asarray(plane_field)
    if field.shape != plane.shape:
        raise ValueError(f"field shape {field.shape} does not match plane {plane.shape}")
    return PlaneWaveSpectrum(
        sfft.fft2(field),
        spatial_wavenumbers(plane.nx, plane.dx),
        spatial_wavenumbers(plane.ny, plane.dy),
        float(k),
        float(plane.z),
    )


def pws_recompose(spec: PlaneWaveSpectrum) -> np.ndarray:
    return sfft.ifft2(spec.values)


def propagate(spec: PlaneWaveSpectrum, z_target: float) -> PlaneWaveSpectrum:
    """Move the spectrum to ``z_target`` in either direction; evanescent bins are zeroed."""
    mask = spec.propagating
    kz = np.where(mask, np.nan_to_num(spec.kz), 0.0)
    h = np.where(mask, np.exp(-1j * kz * (z_target - spec.z_ref)), 0.0)
    return PlaneWaveSpectrum(spec.values * h, spec.kx, spec.ky, spec.k, float(z_target))


def backpropagate(spec: PlaneWaveSpectrum, z_target: float) -> PlaneWaveSpectrum:
    """Carry the spectrum back towards the sources (``z_target`` below ``z_ref``).

    Propagating bins get ``exp(+j*kz*(z_ref - z_target))``.  ``z_target ==
    z_ref`` is accepted as the zero-distance case.
    """
    if z_target > spec.z_ref:
        raise ValueError(f"z_target {z_target} lies above the spectrum plane z = {spec.z_ref}")
    return propagate(spec, z_target)


def backpropagation_transfer(kx, ky, k: float, z_ref: float, zs) -> np.ndarray:
    """(nz, ny, nx) transfer functions from ``z_ref`` down to each depth in ``zs``."""
    kt2 = kx[None, :] ** 2 + ky[:, None] ** 2
    mask = kt2 <= k**2
    kz = np.sqrt(np.where(mask, k**2 - kt2, 0.0))
    dz = z_ref - np.asarray(zs, float)
    h = np.exp(1j * kz[None] * dz[:, None, None])
    h *= mask[None]
    return h


@dataclass
class ImageVolume:
    """Complex image ``values[p, z, y, x]`` for the three Cartesian components.

    ``provenance`` is ``(n, f)`` for a single-frequency image or ``"combined"``.
    """

    values: np.ndarray
    volume: ImagingVolume
    provenance: tuple[int, int] | str

    def __post_init__(self):
        if self.values.shape != (3,) + self.volume.shape:
            raise ValueError(f"image shape {self.values.shape} does not match volume {self.volume.shape}")

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=0))


def _lattice_indices(axis: np.ndarray, start: float, step: float, n: int, name: str) -> np.ndarray:
    f = (axis - start) / step
    idx = np.rint(f).astype(int)
    if np.any(np.abs(f - idx) > 1e-6) or np.any(idx < 0) or np.any(idx >= n):
        raise ValueError(f"volume {name}-grid is not on the measurement lattice")
    return idx


def _idft_rows(k: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Rows of the inverse DFT evaluated at arbitrary offsets from the first sample.

    At offsets ``i * d / pad`` this reproduces a zero-padded inverse FFT
    scaled back to the original amplitude (band-limited interpolation).
    """
    return np.exp(1j * np.outer(offsets, k)) / len(k)


class _Imager:
    """Precomputed geometry for imaging one cube onto one volume."""

    def __init__(self, cube: MeasurementDataCube, volume: ImagingVolume, padding: int = 1):
        if padding < 1 or int(padding) != padding:
            raise ValueError("padding must be an integer >= 1")
        plane = cube.plane
        volume.check_clear_of(plane)
        if volume.z_range[1] >= plane.z:
            raise ValueError("imaging volume must lie below the measurement plane")
        self.cube, self.volume, self.pad = cube, volume, int(padding)
        _lattice_indices(volume.xs, plane.x_min, plane.dx / padding, plane.nx * padding, "x")
        _lattice_indices(volume.ys, plane.y_min, plane.dy / padding, plane.ny * padding, "y")
        self.kx = spatial_wavenumbers(plane.nx, plane.dx)
        self.ky = spatial_wavenumbers(plane.ny, plane.dy)
        # inverse transform restricted to the volume window
        self.ex = _idft_rows(self.kx, volume.xs - plane.x_min)
        self.ey = _idft_rows(self.ky, volume.ys - plane.y_min)
        self._h_key = None
        self._h = None

    def transfer(self, f: int) -> np.ndarray:
        if self._h_key != f:
            k = self.cube.grid.k[f]
            self._h = backpropagation_transfer(self.kx, self.ky, k, self.cube.plane.z, self.volume.zs)
            self._h_key = f
        return self._h

    def image(self, n: int, f: int) -> ImageVolume:
        cube = self.cube
        if not (0 <= n < len(cube.txs)) or not (0 <= f < cube.grid.count):
            raise IndexError(f"(n, f) = ({n}, {f}) outside the cube")
        out = np.zeros((3,) + self.volume.shape, dtype=complex)
        h = None
        for p, comp in enumerate(cube.components):
            data = cube.values[n, f, p].reshape(cube.plane.shape)
            if not np.any(data):
                continue
            if h is None:
                h = self.transfer(f)
            stack = sfft.fft2(data)[None] * h
            out[int(comp)] = np.matmul(np.matmul(self.ey, stack), self.ex.T)
        return ImageVolume(out, self.volume, (n, f))


def single_frequency_image(
    cube: MeasurementDataCube, n: int, f: int, volume: ImagingVolume, padding: int = 1
) -> ImageVolume:
    """Backpropagated image of transmitter ``n`` at frequency index ``f``.

    Every measured component is imaged independently; components that were
    not measured stay zero.  The volume's x/y voxels must lie on the plane
    lattice refined by ``padding``
    (see :meth:`ImagingVolume.on_plane_lattice`).
    """
    return _Imager(cube, volume, padding).image(n, f)


class ImageSet(Mapping):
    """Lazy mapping ``(n, f) -> ImageVolume`` over a whole data cube.

    Images are computed on access and not kept, so a full multi-transmitter,
    multi-frequency stack never has to sit in memory at once.
    """

    def __init__(self, cube: MeasurementDataCube, volume: ImagingVolume, padding: int = 1):
        self._imager = _Imager(cube, volume, padding)
        self.cube = cube
        self.volume = volume
        self.padding = padding

    def __getitem__(self, key) -> ImageVolume:
        n, f = key
        return self._imager.image(n, f)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        for f in range(self.cube.grid.count):
            for n in range(len(self.cube.txs)):
                yield (n, f)

    def __len__(self) -> int:
        return len(self.cube.txs) * self.cube.grid.count

    def __contains__(self, key) -> bool:
        try:
            n, f = key
        except (TypeError, ValueError):
            return False
        return 0 <= n < len(self.cube.txs) and 0 <= f < self.cube.grid.count

    @property
    def grid(self):
        return self.cube.grid

    @property
    def txs(self):
        return self.cube.txs
