"""Geometric and spectral domain types shared by every stage of the pipeline.

Planar arrays are always stored row-major with y as the outer axis and x as
the inner axis.  Fields use the ``exp(+j*omega*t)`` time convention, so an
outgoing spherical wave carries ``exp(-j*k*R)``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.constants import c as C0

__all__ = [
    "C0",
    "FieldComponent",
    "FrequencyGrid",
    "ImagingVolume",
    "MeasurementPlane",
    "SamplingWarning",
    "TxSource",
    "as_components",
    "make_frequency_grid",
    "plane_sample_positions",
]


class SamplingWarning(UserWarning):
    """Plane spacing coarser than half the shortest wavelength."""


def _vec3(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be a finite 3-vector, got {v!r}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform list of measurement frequencies.

    ``delta_k`` is the wavenumber step ``2*pi*delta_f/c``.  A one-entry grid
    uses ``delta_k = 1`` so that frequency weighting collapses to a plain sum.
    """

    f_min: float
    f_max: float
    count: int

    def __post_init__(self):
        if isinstance(self.count, bool) or int(self.count) != self.count:
            raise ValueError(f"count must be an integer, got {self.count!r}")
        object.__setattr__(self, "count", int(self.count))
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not (np.isfinite(self.f_min) and np.isfinite(self.f_max)):
            raise ValueError("frequencies must be finite")
        if self.f_min <= 0 or self.f_max <= 0:
            raise ValueError("frequencies must be positive")
        if self.f_min > self.f_max:
            raise ValueError(f"f_min ({self.f_min}) > f_max ({self.f_max})")
        if self.count == 1 and self.f_min != self.f_max:
            raise ValueError("a single-frequency grid needs f_min == f_max")
        if self.count > 1 and self.f_min == self.f_max:
            raise ValueError("count > 1 needs f_min < f_max")

    @property
    def delta_f(self) -> float:
        if self.count == 1:
            return 0.0
        return (self.f_max - self.f_min) / (self.count - 1)

    @property
    def freqs(self) -> np.ndarray:
        return self.f_min + self.delta_f * np.arange(self.count)

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * self.freqs / C0

    @property
    def delta_k(self) -> float:
        if self.count == 1:
            return 1.0
        return 2 * np.pi * self.delta_f / C0

    @property
    def wavelength_min(self) -> float:
        return C0 / self.f_max

    def __len__(self) -> int:
        return self.count

    def index_of(self, freq: float) -> int:
        """Index of the entry equal to ``freq`` (to 1e-9 relative)."""
        if self.count == 1:
            i = 0
        else:
            i = int(round((freq - self.f_min) / self.delta_f))
        if not (0 <= i < self.count) or not np.isclose(self.freqs[i], freq, rtol=1e-9, atol=0):
            raise ValueError(f"{freq} Hz is not on the grid")
        return i

    def subset(self, indices: Sequence[int]) -> "FrequencyGrid":
        """Sub-grid made of ``indices``; they must be uniformly spaced."""
        idx = np.asarray(indices, dtype=int)
        if idx.size == 0:
            raise ValueError("empty frequency subset")
        if np.any(idx < 0) or np.any(idx >= self.count):
            raise IndexError(f"frequency index out of range 0..{self.count - 1}")
        if idx.size > 1:
            steps = np.diff(idx)
            if np.any(steps <= 0) or np.any(steps != steps[0]):
                raise ValueError(f"frequency subset {list(idx)} is not uniform and increasing")
        f = self.freqs[idx]
        return FrequencyGrid(float(f[0]), float(f[-1]), int(idx.size))


def make_frequency_grid(f_min: float, f_max: float, count: int) -> FrequencyGrid:
    return FrequencyGrid(float(f_min), float(f_max), count)


class FieldComponent(enum.IntEnum):
    X = 0
    Y = 1
    Z = 2

    @classmethod
    def parse(cls, name) -> "FieldComponent":
        if isinstance(name, FieldComponent):
            return name
        try:
            if isinstance(name, (int, np.integer)):
                return cls(int(name))
            return cls[str(name).upper()]
        except (KeyError, ValueError):
            raise ValueError(f"unknown field component {name!r}") from None


def as_components(components: Iterable) -> tuple[FieldComponent, ...]:
    comps = tuple(FieldComponent.parse(c) for c in components)
    if not comps:
        raise ValueError("at least one field component is required")
    if len(set(comps)) != len(comps):
        raise ValueError(f"duplicate field components in {comps}")
    return comps


@dataclass(frozen=True)
class TxSource:
    """Ideal Hertzian dipole used as the illuminator.

    ``moment`` is the complex dipole moment in C*m.
    """

    position: np.ndarray
    polarization: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    moment: complex = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        pol = _vec3(self.polarization, "polarization")
        if abs(np.linalg.norm(pol) - 1.0) > 1e-12:
            raise ValueError(f"polarization must be a unit vector, |p| = {np.linalg.norm(pol)}")
        object.__setattr__(self, "polarization", pol)
        m = complex(self.moment)
        if not np.isfinite(m):
            raise ValueError("dipole moment must be finite")
        object.__setattr__(self, "moment", m)

    def __eq__(self, other):
        if not isinstance(other, TxSource):
            return NotImplemented
        return (
            np.array_equal(self.position, other.position)
            and np.array_equal(self.polarization, other.polarization)
            and self.moment == other.moment
        )

    def __hash__(self):
        return hash((tuple(self.position), tuple(self.polarization), self.moment))


@dataclass(frozen=True)
class MeasurementPlane:
    """Uniformly sampled rectangle at height ``z`` where the probe records fields."""

    z: float
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("plane needs at least 2 samples per axis")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("plane extents must satisfy min < max")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def xs(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.y_min + self.dy * np.arange(self.ny)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def is_undersampled(self, grid: FrequencyGrid) -> bool:
        half = grid.wavelength_min / 2
        return self.dx > half or self.dy > half

    def check_sampling(self, grid: FrequencyGrid) -> bool:
        """Warn when the spacing exceeds half the shortest wavelength.

        Returns True when the plane is adequately sampled.
        """
        if self.is_undersampled(grid):
            warnings.warn(
                f"plane spacing ({self.dx * 1e3:.2f} mm, {self.dy * 1e3:.2f} mm) exceeds "
                f"lambda_min/2 = {grid.wavelength_min / 2 * 1e3:.2f} mm",
                SamplingWarning,
                stacklevel=2,
            )
            return False
        return True


def plane_sample_positions(plane: MeasurementPlane) -> np.ndarray:
    """(ny*nx, 3) sample positions, y outer and x inner."""
    yy, xx = np.meshgrid(plane.ys, plane.xs, indexing="ij")
    pos = np.empty((plane.size, 3))
    pos[:, 0] = xx.ravel()
    pos[:, 1] = yy.ravel()
    pos[:, 2] = plane.z
    return pos


def _axis(lo: float, hi: float, n: int) -> np.ndarray:
    if n == 1:
        return np.array([float(lo)])
    return np.linspace(lo, hi, n)


@dataclass(frozen=True)
class ImagingVolume:
    """Box of voxel centers where images are reconstructed.

    Axes are uniform; an axis with a single voxel needs ``lo == hi``.
    """

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    z_range: tuple[float, float]
    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        for name in ("x_range", "y_range", "z_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            object.__setattr__(self, name, (lo, hi))
        for name, rng in (("nx", self.x_range), ("ny", self.y_range), ("nz", self.z_range)):
            n = int(getattr(self, name))
            object.__setattr__(self, name, n)
            if n < 1:
                raise ValueError(f"{name} must be >= 1")
            if n == 1 and rng[0] != rng[1]:
                raise ValueError(f"{name} = 1 needs a degenerate range, got {rng}")
            if n > 1 and not rng[1] > rng[0]:
                raise ValueError(f"range for {name} must be increasing, got {rng}")

    @classmethod
    def on_plane_lattice(
        cls,
        plane: MeasurementPlane,
        x_range: tuple[float, float],
        y_range: tuple[float, float],
        z_range: tuple[float, float],
        dz: float,
        padding: int = 1,
    ) -> "ImagingVolume":
        """Volume whose x/y voxels sit on the (optionally refined) plane lattice.

        The x/y window is shrunk to the lattice points inside ``x_range`` and
        ``y_range``; z is sampled every ``dz`` from ``z_range[0]``.
        """
        if padding < 1 or int(padding) != padding:
            raise ValueError("padding must be an integer >= 1")
        xs = _lattice_window(plane.x_min, plane.dx / padding, plane.nx * padding, x_range, "x")
        ys = _lattice_window(plane.y_min, plane.dy / padding, plane.ny * padding, y_range, "y")
        nz = int(np.floor((z_range[1] - z_range[0]) / dz + 1e-9)) + 1
        z_hi = z_range[0] + (nz - 1) * dz
        return cls(
            (xs[0], xs[-1]), (ys[0], ys[-1]), (float(z_range[0]), float(z_hi)),
            len(xs), len(ys), nz,
        )

    @property
    def xs(self) -> np.ndarray:
        return _axis(*self.x_range, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return _axis(*self.y_range, self.ny)

    @property
    def zs(self) -> np.ndarray:
        return _axis(*self.z_range, self.nz)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nz, self.ny, self.nx)

    @property
    def spacing(self) -> tuple[float, float, float]:
        """(dx, dy, dz); zero along a single-voxel axis."""
        def step(rng, n):
            return 0.0 if n == 1 else (rng[1] - rng[0]) / (n - 1)
        return (step(self.x_range, self.nx), step(self.y_range, self.ny), step(self.z_range, self.nz))

    @property
    def origin(self) -> tuple[float, float, float]:
        return (self.x_range[0], self.y_range[0], self.z_range[0])

    def voxel_centers(self) -> np.ndarray:
        """(nz, ny, nx, 3) array of voxel center coordinates."""
        zz, yy, xx = np.meshgrid(self.zs, self.ys, self.xs, indexing="ij")
        return np.stack([xx, yy, zz], axis=-1)

    def position(self, index) -> np.ndarray:
        iz, iy, ix = index
        return np.array([self.xs[ix], self.ys[iy], self.zs[iz]])

    def nearest_index(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest voxel (iz, iy, ix) for each point and a mask of points inside the box.

        A point counts as inside when it lies within half a voxel of the box.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.empty((len(pts), 3), dtype=int)
        inside = np.ones(len(pts), dtype=bool)
        for col, (rng, n, d) in enumerate(zip(
            (self.z_range, self.y_range, self.x_range),
            (self.nz, self.ny, self.nx),
            (self.spacing[2], self.spacing[1], self.spacing[0]),
        )):
            coord = pts[:, 2 - col]
            if n == 1:
                i = np.zeros(len(pts), dtype=int)
                tol = 0.5 * max(self.spacing) if max(self.spacing) > 0 else 1e-9
                inside &= np.abs(coord - rng[0]) <= tol
            else:
                f = (coord - rng[0]) / d
                i = np.rint(f).astype(int)
                inside &= (f >= -0.5) & (f <= n - 0.5)
            idx[:, col] = np.clip(i, 0, n - 1)
        return idx, inside

    def check_clear_of(self, plane: MeasurementPlane) -> None:
        if self.z_range[0] <= plane.z <= self.z_range[1]:
            raise ValueError(
                f"imaging volume z-range {self.z_range} intersects the measurement plane z = {plane.z}"
            )


def _lattice_window(start: float, step: float, n: int, rng, name: str) -> np.ndarray:
    lo, hi = float(rng[0]), float(rng[1])
    i0 = int(np.ceil((lo - start) / step - 1e-9))
    i1 = int(np.floor((hi - start) / step + 1e-9))
    i0, i1 = max(i0, 0), min(i1, n - 1)
    if i1 < i0:
        raise ValueError(f"{name}-window {rng} contains no lattice point")
    return start + step * np.arange(i0, i1 + 1)
