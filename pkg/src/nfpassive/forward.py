"""Synthetic planar measurements for a parametric scene under several illuminators.

The scene model is deliberately simple: every scatterer (an explicit point or
a facet of a reflective plate) reradiates the local incident field vector
through the scalar free-space Green's function.  Plates additionally block
line of sight (hard shadows) and act as mirrors for a second bounce via the
image method.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.constants import epsilon_0

from .grids import (
    FieldComponent,
    FrequencyGrid,
    MeasurementPlane,
    TxSource,
    as_components,
    plane_sample_positions,
)

__all__ = [
    "MeasurementDataCube",
    "PointScatterer",
    "ReflectivePlate",
    "SceneDescription",
    "dipole_field",
    "green",
    "is_occluded",
    "mirror_source",
    "occlusion_mask",
    "scattered_field_double_bounce",
    "scattered_field_single_bounce",
    "simulate",
]

log = logging.getLogger(__name__)

# relative tolerance used by the open-segment / open-rectangle tests
_EPS = 1e-12
# target number of complex entries per Green's-matrix block
_BLOCK = 2_000_000


@dataclass(frozen=True)
class PointScatterer:
    position: np.ndarray
    reflectivity: complex = 1.0

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        p.setflags(write=False)
        object.__setattr__(self, "position", p)
        r = complex(self.reflectivity)
        if not np.isfinite(r):
            raise ValueError("reflectivity must be finite")
        object.__setattr__(self, "reflectivity", r)


@dataclass(frozen=True)
class ReflectivePlate:
    """Flat reflector spanned by two orthogonal edges from ``corner``.

    ``shape="rectangle"`` covers ``corner + s*edge_u + t*edge_v`` for
    ``0 <= s, t <= 1``; ``shape="triangle"`` keeps only ``s + t <= 1`` (a
    right triangle with its right angle at ``corner``).
    """

    corner: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray
    facet_density: float = 200.0
    reflection_coefficient: complex = -1.0
    shape: str = "rectangle"

    def __post_init__(self):
        for name in ("corner", "edge_u", "edge_v"):
            a = np.asarray(getattr(self, name), dtype=float).reshape(3)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        lu, lv = np.linalg.norm(self.edge_u), np.linalg.norm(self.edge_v)
        if lu == 0 or lv == 0:
            raise ValueError("plate edges must be non-zero")
        if abs(np.dot(self.edge_u, self.edge_v)) > 1e-9:
            raise ValueError("plate edges must be orthogonal")
        if not self.facet_density > 0:
            raise ValueError("facet_density must be positive")
        if self.shape not in ("rectangle", "triangle"):
            raise ValueError(f"unknown plate shape {self.shape!r}")
        object.__setattr__(self, "reflection_coefficient", complex(self.reflection_coefficient))

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.edge_u, self.edge_v)
        return n / np.linalg.norm(n)

    @property
    def area(self) -> float:
        a = np.linalg.norm(self.edge_u) * np.linalg.norm(self.edge_v)
        return a / 2 if self.shape == "triangle" else a

    def facets(self, density: float | None = None) -> tuple[np.ndarray, float]:
        """Facet centers (K, 3) and the area of one facet."""
        d = self.facet_density if density is None else density
        nu = max(1, int(np.ceil(np.linalg.norm(self.edge_u) * d - 1e-9)))
        nv = max(1, int(np.ceil(np.linalg.norm(self.edge_v) * d - 1e-9)))
        s = (np.arange(nu) + 0.5) / nu
        t = (np.arange(nv) + 0.5) / nv
        ss, tt = np.meshgrid(s, t, indexing="ij")
        ss, tt = ss.ravel(), tt.ravel()
        if self.shape == "triangle":
            keep = ss + tt < 1
            ss, tt = ss[keep], tt[keep]
        pts = self.corner + ss[:, None] * self.edge_u + tt[:, None] * self.edge_v
        cell = np.linalg.norm(self.edge_u) * np.linalg.norm(self.edge_v) / (nu * nv)
        return pts, cell

    def facet_spacing(self) -> float:
        return 1.0 / self.facet_density


@dataclass(frozen=True)
class SceneDescription:
    scatterers: tuple[PointScatterer, ...] = ()
    plates: tuple[ReflectivePlate, ...] = ()
    parasitic: tuple[PointScatterer, ...] = ()
    occlusion_enabled: bool = True
    double_bounce_enabled: bool = True

    def __post_init__(self):
        for name in ("scatterers", "plates", "parasitic"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def scaled(self, alpha: complex) -> "SceneDescription":
        """Copy with every reflectivity (points, plates, parasitic) multiplied by ``alpha``."""
        return SceneDescription(
            tuple(PointScatterer(s.position, s.reflectivity * alpha) for s in self.scatterers),
            tuple(
                ReflectivePlate(p.corner, p.edge_u, p.edge_v, p.facet_density,
                                p.reflection_coefficient * alpha, p.shape)
                for p in self.plates
            ),
            tuple(PointScatterer(s.position, s.reflectivity * alpha) for s in self.parasitic),
            self.occlusion_enabled,
            self.double_bounce_enabled,
        )

    def geometry_points(self, density: float | None = None) -> np.ndarray:
        """Ground-truth points: scatterers plus plate facets (parasitic echoes excluded)."""
        parts = [np.array([s.position for s in self.scatterers]).reshape(-1, 3)]
        parts += [p.facets(density)[0] for p in self.plates]
        return np.concatenate(parts, axis=0)


@dataclass
class MeasurementDataCube:
    """Sampled probe signals ``values[n, f, p, m]``.

    ``n`` indexes transmitters, ``f`` frequencies, ``p`` the measured
    components (in the order of ``components``) and ``m`` plane samples in
    row-major (y, x) order.
    """

    values: np.ndarray
    grid: FrequencyGrid
    plane: MeasurementPlane
    txs: tuple[TxSource, ...]
    components: tuple[FieldComponent, ...]
    incident_included: bool = False

    def __post_init__(self):
        self.txs = tuple(self.txs)
        self.components = as_components(self.components)
        expected = (len(self.txs), self.grid.count, len(self.components), self.plane.size)
        if self.values.shape != expected:
            raise ValueError(f"cube shape {self.values.shape} != expected {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("cube contains non-finite entries")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def plane_field(self, n: int, f: int, component) -> np.ndarray:
        """One measured component as a (ny, nx) array."""
        p = self.components.index(FieldComponent.parse(component))
        return self.values[n, f, p].reshape(self.plane.shape)


# ---------------------------------------------------------------- fields


def green(r: np.ndarray, r_src: np.ndarray, k: float) -> np.ndarray:
    """Scalar free-space Green's function exp(-jkR) / (4 pi R)."""
    R = np.linalg.norm(np.asarray(r, float) - np.asarray(r_src, float), axis=-1)
    return np.exp(-1j * k * R) / (4 * np.pi * R)


def dipole_field(src: TxSource, r, k: float) -> np.ndarray:
    """Electric field of a Hertzian dipole, all near- and far-field terms.

    ``r`` may be a single point or an (..., 3) array; the result has the
    same leading shape with a trailing axis of 3 complex components (V/m).
    """
    if not k > 0:
        raise ValueError("wavenumber must be positive")
    r = np.asarray(r, dtype=float)
    Rv = r - src.position
    R = np.linalg.norm(Rv, axis=-1, keepdims=True)
    if np.any(R == 0):
        raise ValueError("dipole field evaluated at the source point")
    n = Rv / R
    p = src.polarization
    npd = n @ p
    transverse = p - n * npd[..., None]
    radial = 3 * n * npd[..., None] - p
    kR = k * R
    scale = src.moment / (4 * np.pi * epsilon_0) * np.exp(-1j * kR) / R**3
    return scale * (kR**2 * transverse + (1 + 1j * kR) * radial)


# -------------------------------------------------------------- geometry


def _plate_frame(plate: ReflectivePlate):
    u2 = plate.edge_u @ plate.edge_u
    v2 = plate.edge_v @ plate.edge_v
    return plate.corner, plate.normal, plate.edge_u / u2, plate.edge_v / v2


def _crossings(a: np.ndarray, b: np.ndarray, plate: ReflectivePlate) -> np.ndarray:
    """Boolean (len(a), len(b)) table: open segment a_i -> b_j crosses the open plate."""
    c, nrm, uu, vv = _plate_frame(plate)
    da = (a - c) @ nrm
    db = (b - c) @ nrm
    scale = max(np.linalg.norm(plate.edge_u), np.linalg.norm(plate.edge_v))
    tol = _EPS * scale
    sa, wa = (a - c) @ uu, (a - c) @ vv
    sb, wb = (b - c) @ uu, (b - c) @ vv
    opposite = ((da[:, None] > tol) & (db[None, :] < -tol)) | (
        (da[:, None] < -tol) & (db[None, :] > tol)
    )
    out = np.zeros(opposite.shape, dtype=bool)
    ia, ib = np.nonzero(opposite)
    if ia.size == 0:
        return out
    t = da[ia] / (da[ia] - db[ib])
    s = sa[ia] + t * (sb[ib] - sa[ia])
    w = wa[ia] + t * (wb[ib] - wa[ia])
    if plate.shape == "triangle":
        inside = (s > _EPS) & (w > _EPS) & (s + w < 1 - _EPS)
    else:
        inside = (s > _EPS) & (s < 1 - _EPS) & (w > _EPS) & (w < 1 - _EPS)
    out[ia[inside], ib[inside]] = True
    return out


def _paired_crossings(a: np.ndarray, b: np.ndarray, plate: ReflectivePlate) -> np.ndarray:
    """Like :func:`_crossings` but for the segments a_i -> b_i only."""
    c, nrm, uu, vv = _plate_frame(plate)
    da = (a - c) @ nrm
    db = (b - c) @ nrm
    tol = _EPS * max(np.linalg.norm(plate.edge_u), np.linalg.norm(plate.edge_v))
    opposite = ((da > tol) & (db < -tol)) | ((da < -tol) & (db > tol))
    t = np.where(opposite, da / np.where(opposite, da - db, 1.0), 0.0)
    p = a + t[:, None] * (b - a)
    s, w = (p - c) @ uu, (p - c) @ vv
    if plate.shape == "triangle":
        inside = (s > _EPS) & (w > _EPS) & (s + w < 1 - _EPS)
    else:
        inside = (s > _EPS) & (s < 1 - _EPS) & (w > _EPS) & (w < 1 - _EPS)
    return opposite & inside


def occlusion_mask(a, b, plates: Sequence[ReflectivePlate]) -> np.ndarray:
    """Table of ``is_occluded`` for every pair (a_i, b_j)."""
    a = np.atleast_2d(np.asarray(a, float))
    b = np.atleast_2d(np.asarray(b, float))
    out = np.zeros((len(a), len(b)), dtype=bool)
    for plate in plates:
        out |= _crossings(a, b, plate)
    return out


def is_occluded(a, b, plates: Sequence[ReflectivePlate]) -> bool:
    """True when the open segment a-b passes through the interior of any plate.

    Touching a plate edge or running inside the plate's plane does not count.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if np.array_equal(a, b):
        raise ValueError("segment endpoints coincide")
    return bool(occlusion_mask(a, b, plates)[0, 0])


def mirror_source(src: TxSource, plate: ReflectivePlate) -> TxSource:
    """Image of ``src`` in the infinite plane of ``plate``.

    The in-plane polarization is kept, the normal part flips, and the moment
    picks up the plate's reflection coefficient (-1 reproduces PEC image
    theory).
    """
    n = plate.normal
    d = (src.position - plate.corner) @ n
    if abs(d) < 1e-12:
        raise ValueError("source lies in the plate plane")
    pos = src.position - 2 * d * n
    pol = src.polarization - 2 * (src.polarization @ n) * n
    pol = pol / np.linalg.norm(pol)
    return TxSource(pos, pol, src.moment * plate.reflection_coefficient)


# ----------------------------------------------------------- the scene


@dataclass
class _Emitters:
    """Flat list of everything that reradiates: points, plate facets, parasitics."""

    positions: np.ndarray
    sigma: np.ndarray
    plate_slices: list[slice] = field(default_factory=list)

    @classmethod
    def from_scene(cls, scene: SceneDescription) -> "_Emitters":
        pos, sig, slices = [], [], []
        for s in scene.scatterers:
            pos.append(s.position[None])
            sig.append([s.reflectivity])
        start = len(scene.scatterers)
        for plate in scene.plates:
            pts, area = plate.facets()
            pos.append(pts)
            sig.append(np.full(len(pts), plate.reflection_coefficient * area))
            slices.append(slice(start, start + len(pts)))
            start += len(pts)
        for s in scene.parasitic:
            pos.append(s.position[None])
            sig.append([s.reflectivity])
        if pos:
            positions = np.concatenate(pos, axis=0)
            sigma = np.concatenate([np.asarray(x, complex) for x in sig])
        else:
            positions, sigma = np.empty((0, 3)), np.empty(0, complex)
        return cls(positions, sigma, slices)

    def __len__(self):
        return len(self.positions)


@dataclass
class _Bounce:
    """Second-bounce illumination of the facets of one plate."""

    image: TxSource
    facet_index: np.ndarray  # indices into the emitter list
    area_coeff: complex


def _double_bounces(scene, em: _Emitters, src: TxSource) -> list[_Bounce]:
    out = []
    plates = scene.plates
    if not scene.double_bounce_enabled or len(plates) < 2:
        return out
    for ia, A in enumerate(plates):
        try:
            img = mirror_source(src, A)
        except ValueError:
            continue
        for ib, B in enumerate(plates):
            if ia == ib:
                continue
            sl = em.plate_slices[ib]
            facets = em.positions[sl]
            gate = _crossings(img.position[None], facets, A)[0]
            if scene.occlusion_enabled and gate.any():
                idx = np.nonzero(gate)[0]
                bounce = _segment_plane_points(img.position, facets[idx], A)
                others = [p for j, p in enumerate(plates) if j != ia]
                blocked = occlusion_mask(src.position[None], bounce, others)[0]
                rest = [p for j, p in enumerate(plates) if j not in (ia, ib)]
                for p in rest:
                    blocked |= _paired_crossings(bounce, facets[idx], p)
                gate[idx[blocked]] = False
            if gate.any():
                _, area = B.facets()
                out.append(_Bounce(img, np.arange(sl.start, sl.stop)[gate], B.reflection_coefficient * area))
    return out


def _segment_plane_points(a: np.ndarray, b: np.ndarray, plate: ReflectivePlate) -> np.ndarray:
    c, nrm = plate.corner, plate.normal
    da = (a - c) @ nrm
    db = (b - c) @ nrm
    t = da / (da - db)
    return a + t[:, None] * (b - a)


def _amplitudes(scene, em: _Emitters, src: TxSource, k: float, vis_tx: np.ndarray | None,
                bounces: list[_Bounce], single: bool = True) -> np.ndarray:
    """(3, E) reradiated vector amplitude of every emitter for one source and wavenumber."""
    amp = np.zeros((3, len(em)), dtype=complex)
    if len(em) == 0:
        return amp
    if single:
        w = em.sigma if vis_tx is None else em.sigma * vis_tx
        nz = np.nonzero(w)[0]
        if nz.size:
            amp[:, nz] = (dipole_field(src, em.positions[nz], k) * w[nz, None]).T
    for b in bounces:
        amp[:, b.facet_index] += (dipole_field(b.image, em.positions[b.facet_index], k) * b.area_coeff).T
    return amp


def _radiate(amps: np.ndarray, em_pos: np.ndarray, vis_rx: np.ndarray | None,
             samples: np.ndarray, ks: np.ndarray, threads: int = 1) -> np.ndarray:
    """Sum emitter reradiation at the samples.

    ``amps`` has shape (F, Q, E); returns (F, Q, M).
    """
    F, Q, E = amps.shape
    M = len(samples)
    out = np.zeros((F, Q, M), dtype=complex)
    if E == 0 or M == 0:
        return out
    step = max(1, _BLOCK // max(E, 1))
    chunks = [slice(i, min(i + step, M)) for i in range(0, M, step)]

    def work(sl):
        R = np.linalg.norm(samples[sl][None, :, :] - em_pos[:, None, :], axis=-1)
        inv = 1.0 / (4 * np.pi * R)
        if vis_rx is not None:
            inv *= vis_rx[:, sl]
        for fi, k in enumerate(ks):
            ph = k * R
            G = (np.cos(ph) - 1j * np.sin(ph)) * inv
            out[fi, :, sl] = amps[fi] @ G

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, chunks))
    else:
        for sl in chunks:
            work(sl)
    return out


def _vis(scene, a, b):
    if not scene.occlusion_enabled or not scene.plates:
        return None
    return ~occlusion_mask(a, b, scene.plates)


def _check_off(points: np.ndarray, targets: np.ndarray, what: str):
    if len(points) == 0 or len(targets) == 0:
        return
    for p in points:
        d = np.min(np.linalg.norm(targets - p, axis=1))
        if d < 1e-9:
            raise ValueError(f"{what} at {p} coincides with an observation point")


def scattered_field_single_bounce(scene: SceneDescription, src: TxSource, r_m, k: float) -> np.ndarray:
    """Born single-bounce field at ``r_m`` (a point or (M, 3) array) from scatterers and plate facets.

    Parasitic echoes are excluded here; :func:`simulate` adds them.
    """
    pts = np.atleast_2d(np.asarray(r_m, float))
    core = SceneDescription(scene.scatterers, scene.plates, (), scene.occlusion_enabled, False)
    em = _Emitters.from_scene(core)
    _check_off(em.positions, pts, "scatterer")
    vis_tx = _vis(core, src.position[None], em.positions)
    amp = _amplitudes(core, em, src, k, None if vis_tx is None else vis_tx[0], [])
    out = _radiate(amp[None], em.positions, _vis(core, em.positions, pts), pts, np.array([k]))[0]
    out = out.T
    return out[0] if np.ndim(r_m) == 1 else out


def scattered_field_double_bounce(scene: SceneDescription, src: TxSource, r_m, k: float) -> np.ndarray:
    """Plate-to-plate second-bounce field via mirrored sources, specular-gated."""
    pts = np.atleast_2d(np.asarray(r_m, float))
    core = SceneDescription(scene.scatterers, scene.plates, (), scene.occlusion_enabled, True)
    em = _Emitters.from_scene(core)
    bounces = _double_bounces(core, em, src)
    if not bounces:
        out = np.zeros((len(pts), 3), dtype=complex)
    else:
        amp = _amplitudes(core, em, src, k, None, bounces, single=False)
        out = _radiate(amp[None], em.positions, _vis(core, em.positions, pts), pts, np.array([k]))[0].T
    return out[0] if np.ndim(r_m) == 1 else out


def simulate(
    scene: SceneDescription,
    txs: Sequence[TxSource],
    grid: FrequencyGrid,
    plane: MeasurementPlane,
    components=("x", "y"),
    include_incident: bool = False,
    noise_snr_db: float | None = None,
    seed: int = 0,
    threads: int = 1,
) -> MeasurementDataCube:
    """Probe signals for every transmitter, frequency and measured component.

    The result is the sum of the optional incident field, single-bounce
    scattering, plate double bounces and parasitic echoes.  Noise is complex
    circular Gaussian with power set against the mean scattered power, drawn
    from ``numpy.random.default_rng(seed)``.
    """
    txs = tuple(txs)
    comps = as_components(components)
    if not txs:
        raise ValueError("at least one transmitter is required")
    samples = plane_sample_positions(plane)
    plane.check_sampling(grid)
    for tx in txs:
        if abs(tx.position[2] - plane.z) < 1e-9:
            raise ValueError(f"transmitter at {tx.position} lies on the measurement plane")
    em = _Emitters.from_scene(scene)
    if len(em) and np.any(np.abs(em.positions[:, 2] - plane.z) < 1e-9):
        raise ValueError("a scatterer lies on the measurement plane")

    ks = grid.k
    N, F, E = len(txs), grid.count, len(em)
    vis_tx = _vis(scene, np.array([t.position for t in txs]), em.positions)
    vis_rx = _vis(scene, em.positions, samples)
    amps = np.zeros((F, N * 3, E), dtype=complex)
    for n, tx in enumerate(txs):
        bounces = _double_bounces(scene, em, tx)
        log.debug("tx %d: %d double-bounce paths", n, len(bounces))
        for f, k in enumerate(ks):
            amps[f, 3 * n:3 * n + 3] = _amplitudes(
                scene, em, tx, k, None if vis_tx is None else vis_tx[n], bounces
            )
    field = _radiate(amps, em.positions, vis_rx, samples, ks, threads)
    field = field.reshape(F, N, 3, len(samples)).transpose(1, 0, 2, 3)
    sel = [int(c) for c in comps]
    scat = np.ascontiguousarray(field[:, :, sel, :])

    values = scat.copy()
    if noise_snr_db is not None and np.isfinite(noise_snr_db):
        power = np.mean(np.abs(scat) ** 2)
        rng = np.random.default_rng(seed)
        sigma = np.sqrt(power / 10 ** (noise_snr_db / 10) / 2)
        noise = rng.standard_normal(values.shape) + 1j * rng.standard_normal(values.shape)
        values += sigma * noise
    if include_incident:
        for n, tx in enumerate(txs):
            for f, k in enumerate(ks):
                values[n, f] += dipole_field(tx, samples, k)[:, sel].T
    return MeasurementDataCube(values, grid, plane, txs, comps, include_incident)
