"""Coherent and incoherent superposition of single-frequency, single-transmitter images.

Each image term is weighted by the incident-path phase correction
``exp(+j k |r' - r_n|)``, the spreading correction ``|r' - r_n|`` and the
spectral weight ``k_f * dk``, then summed.  Summation runs in a fixed order
(frequency outer, transmitter inner) so results are bit-reproducible.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grids import FrequencyGrid, ImagingVolume, TxSource
from .pws import ImageVolume

__all__ = [
    "CombineWeights",
    "CombinedImage",
    "coherent_combine",
    "incoherent_combine",
    "magnitude_correction",
    "phase_correction",
    "subset_combine",
]


def _distance(tx: TxSource, voxel) -> np.ndarray:
    d = np.linalg.norm(np.asarray(voxel, float) - tx.position, axis=-1)
    if np.any(d == 0):
        raise ValueError("voxel coincides with the transmitter position")
    return d


def phase_correction(k: float, tx: TxSource, voxel) -> complex | np.ndarray:
    """Unit phasor cancelling the transmitter-to-voxel propagation phase."""
    return np.exp(1j * k * _distance(tx, voxel))


def magnitude_correction(tx: TxSource, voxel) -> float | np.ndarray:
    """Transmitter-to-voxel distance in meters (undoes 1/R incident spreading)."""
    return _distance(tx, voxel)


class CombineWeights:
    """Correction factors for one volume, evaluated lazily per (f, n).

    ``psi(f, n)`` and ``mag(n)`` return arrays over the voxel grid; the same
    factors apply to every field component.
    """

    def __init__(self, volume: ImagingVolume, ks: np.ndarray, dk: float, txs: Sequence[TxSource]):
        self.volume = volume
        self.ks = np.asarray(ks, float)
        self.dk = float(dk)
        self.txs = tuple(txs) if txs is not None else ()
        self._centers = volume.voxel_centers()
        self._dist: dict[int, np.ndarray] = {}

    @property
    def spectral(self) -> np.ndarray:
        return self.ks * self.dk

    def distance(self, n: int) -> np.ndarray:
        if n not in self._dist:
            self._dist[n] = _distance(self.txs[n], self._centers)
        return self._dist[n]

    def psi(self, f: int, n: int) -> np.ndarray:
        return np.exp(1j * self.ks[f] * self.distance(n))

    def mag(self, n: int) -> np.ndarray:
        return self.distance(n)


@dataclass
class CombinedImage:
    """Result of a (coherent or incoherent) superposition.

    ``intensity`` is the vector magnitude normalised to a peak of 1;
    ``peak`` keeps the pre-normalisation maximum (0 flags an empty image).
    ``values`` is None for incoherent sums.
    """

    values: np.ndarray | None
    intensity: np.ndarray
    volume: ImagingVolume
    provenance: list[tuple[int, int]]
    mode: str
    peak: float
    raw_intensity: np.ndarray = field(repr=False, default=None)

    @property
    def is_empty(self) -> bool:
        return self.peak == 0

    @classmethod
    def from_intensity(cls, raw: np.ndarray, volume, provenance, mode, values=None) -> "CombinedImage":
        peak = float(np.max(raw)) if raw.size else 0.0
        intensity = raw / peak if peak > 0 else np.zeros_like(raw)
        return cls(values, intensity, volume, list(provenance), mode, peak, raw)


def _check_keys(images: Mapping) -> tuple[list[int], list[int], list[tuple[int, int]]]:
    keys = list(images.keys())
    if not keys:
        raise ValueError("no images to combine")
    ns = sorted({n for n, _ in keys})
    fs = sorted({f for _, f in keys})
    if len(keys) != len(ns) * len(fs) or set(keys) != {(n, f) for n in ns for f in fs}:
        raise ValueError("image set is not a complete (transmitter x frequency) product")
    order = [(n, f) for f in fs for n in ns]
    return ns, fs, order


def _spectral(grid: FrequencyGrid, fs: list[int]) -> tuple[np.ndarray, float]:
    if len(fs) == grid.count:
        return grid.k, grid.delta_k
    sub = grid.subset(fs)
    ks = np.full(grid.count, np.nan)
    ks[fs] = sub.k
    return ks, sub.delta_k


def _combine(images: Mapping, grid: FrequencyGrid, txs, mode: str, magnitude: bool) -> CombinedImage:
    ns, fs, order = _check_keys(images)
    if max(fs) >= grid.count:
        raise IndexError("frequency index outside the grid")
    ks, dk = _spectral(grid, fs)
    volume = None
    weights = None
    acc = None
    for n, f in order:
        img = images[(n, f)]
        if volume is None:
            volume = img.volume
            weights = CombineWeights(volume, ks, dk, txs)
            acc = np.zeros((3,) + volume.shape, complex) if mode == "coherent" else np.zeros(volume.shape)
        elif img.volume != volume:
            raise ValueError(f"image ({n}, {f}) has a different geometry")
        if mode == "coherent":
            w = weights.psi(f, n) * (ks[f] * dk)
            if magnitude:
                w = w * weights.mag(n)
            acc += img.values * w[None]
        else:
            acc += (ks[f] * dk) * img.magnitude
    if mode == "coherent":
        raw = np.sqrt(np.sum(np.abs(acc) ** 2, axis=0))
        return CombinedImage.from_intensity(raw, volume, order, mode, values=acc)
    return CombinedImage.from_intensity(acc, volume, order, mode)


def coherent_combine(images: Mapping, grid: FrequencyGrid, txs: Sequence[TxSource],
                     magnitude: bool = True) -> CombinedImage:
    """Phase- and magnitude-corrected complex sum over every (n, f) in ``images``.

    ``magnitude=False`` drops the spreading correction (used when comparing
    against the incoherent sum).
    """
    return _combine(images, grid, txs, "coherent", magnitude)


def incoherent_combine(images: Mapping, grid: FrequencyGrid) -> CombinedImage:
    """Sum of ``k_f * dk`` weighted vector magnitudes; phases are discarded."""
    return _combine(images, grid, None, "incoherent", False)


class _Subset(Mapping):
    def __init__(self, images: Mapping, keys):
        self._images = images
        self._keys = keys

    def __getitem__(self, key):
        if key not in self._keys:
            raise KeyError(key)
        return self._images[key]

    def __iter__(self):
        return iter(self._keys)

    def __len__(self):
        return len(self._keys)


def subset_combine(
    images: Mapping,
    freq_subset: Sequence[int],
    tx_subset: Sequence[int],
    mode: str,
    grid: FrequencyGrid,
    txs: Sequence[TxSource] | None = None,
    magnitude: bool = True,
) -> CombinedImage:
    """Combine only the listed frequency and transmitter indices (0-based).

    The frequency subset must be uniformly spaced; its own spacing sets the
    spectral weight.
    """
    fs = sorted(set(int(f) for f in freq_subset))
    ns = sorted(set(int(n) for n in tx_subset))
    if not fs or not ns:
        raise ValueError("subsets must be non-empty")
    grid.subset(fs)
    keys = [(n, f) for f in fs for n in ns]
    missing = [k for k in keys if k not in images]
    if missing:
        raise KeyError(f"images missing for {missing[:3]}")
    sub = _Subset(images, keys)
    if mode == "coherent":
        if txs is None:
            raise ValueError("coherent mode needs the transmitter list")
        return coherent_combine(sub, grid, txs, magnitude)
    if mode == "incoherent":
        return incoherent_combine(sub, grid)
    raise ValueError(f"unknown mode {mode!r}")
