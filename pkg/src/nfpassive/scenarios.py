"""Scenario configuration files, built-in presets and the end-to-end pipeline.

Configuration files are JSON (``schema_version`` 1).  Transmitter and frequency
subsets in configuration files and on the command line are 1-based;
everything in the Python API is 0-based.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import io as nio
from .analysis import GroundTruthMask, MetricsReport, mip, score_image
from .combine import CombinedImage, subset_combine
from .forward import PointScatterer, ReflectivePlate, SceneDescription, simulate
from .grids import (
    ImagingVolume,
    MeasurementPlane,
    SamplingWarning,
    TxSource,
    as_components,
    make_frequency_grid,
)
from .pws import ImageSet

__all__ = [
    "ConfigError",
    "PipelineError",
    "PipelineResult",
    "SCHEMA",
    "ScenarioConfig",
    "config_from_dict",
    "config_to_dict",
    "dihedral_plates",
    "parse_config",
    "preset",
    "pyramid_plates",
    "run_pipeline",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending field."""


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


# ------------------------------------------------------------------ schema

_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_complex = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    ]
}
_range = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_index_list = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_point = _obj({"position": _vec3, "reflectivity": _complex}, ["position"])

SCHEMA: dict = _obj(
    {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "assumptions": {"type": "array", "items": {"type": "string"}},
        "scene": _obj(
            {
                "scatterers": {"type": "array", "items": _point},
                "plates": {
                    "type": "array",
                    "items": _obj(
                        {
                            "corner": _vec3,
                            "edge_u": _vec3,
                            "edge_v": _vec3,
                            "facet_density": {"type": "number", "exclusiveMinimum": 0},
                            "reflection_coefficient": _complex,
                            "shape": {"enum": ["rectangle", "triangle"]},
                        },
                        ["corner", "edge_u", "edge_v"],
                    ),
                },
                "parasitic": {"type": "array", "items": _point},
                "occlusion": {"type": "boolean"},
                "double_bounce": {"type": "boolean"},
            }
        ),
        "transmitters": {
            "type": "array",
            "minItems": 1,
            "items": _obj(
                {"position": _vec3, "polarization": _vec3, "moment": _complex}, ["position"]
            ),
        },
        "frequency": _obj(
            {"f_min": {"type": "number"}, "f_max": {"type": "number"}, "count": {"type": "integer"}},
            ["f_min", "f_max", "count"],
        ),
        "plane": _obj(
            {
                "z": {"type": "number"},
                "x": _range,
                "y": _range,
                "nx": {"type": "integer"},
                "ny": {"type": "integer"},
                "components": {"type": "array", "items": {"enum": ["x", "y", "z"]}, "minItems": 1},
            },
            ["z", "x", "y", "nx", "ny"],
        ),
        "volume": _obj(
            {"x": _range, "y": _range, "z": _range, "dz": {"type": "number", "exclusiveMinimum": 0}},
            ["x", "y", "z", "dz"],
        ),
        "pipeline": _obj(
            {
                "mode": {"enum": ["coherent", "incoherent", "both"]},
                "tx_subset": _index_list,
                "freq_subset": _index_list,
                "include_incident": {"type": "boolean"},
                "noise_snr_db": {"type": ["number", "null"]},
                "seed": {"type": "integer", "minimum": 0},
                "padding": {"type": "integer", "minimum": 1},
                "floor_db": {"type": "number", "exclusiveMaximum": 0},
                "mip_axes": {"type": "array", "items": {"enum": ["x", "y", "z"]}},
                "threshold_db": {"type": "number", "exclusiveMaximum": 0},
                "truth_dilation": {"type": "integer", "minimum": 0},
                "ghost_radius": {"type": "integer", "minimum": 0},
                "threads": {"type": "integer", "minimum": 1},
            }
        ),
        "output_dir": {"type": "string"},
    },
    ["schema_version", "scene", "transmitters", "frequency", "plane", "volume"],
)


@dataclass(frozen=True)
class PipelineOptions:
    mode: str = "coherent"
    tx_subset: tuple[int, ...] | None = None  # 0-based
    freq_subset: tuple[int, ...] | None = None
    include_incident: bool = False
    noise_snr_db: float | None = None
    seed: int = 0
    padding: int = 1
    floor_db: float = -30.0
    mip_axes: tuple[str, ...] = ("y",)
    threshold_db: float = -10.0
    truth_dilation: int = 1
    ghost_radius: int = 2
    threads: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    scene: SceneDescription
    txs: tuple[TxSource, ...]
    f_min: float
    f_max: float
    f_count: int
    plane: MeasurementPlane
    components: tuple
    volume_x: tuple[float, float]
    volume_y: tuple[float, float]
    volume_z: tuple[float, float]
    dz: float
    options: PipelineOptions = field(default_factory=PipelineOptions)
    output_dir: str = "out"
    assumptions: tuple[str, ...] = ()

    @property
    def grid(self):
        return make_frequency_grid(self.f_min, self.f_max, self.f_count)

    def volume(self) -> ImagingVolume:
        return ImagingVolume.on_plane_lattice(
            self.plane, self.volume_x, self.volume_y, self.volume_z, self.dz, self.options.padding
        )

    def with_options(self, **kw) -> "ScenarioConfig":
        return replace(self, options=replace(self.options, **kw))


# ------------------------------------------------------------ conversions


def _cplx(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def _cplx_out(z: complex):
    z = complex(z)
    return z.real if z.imag == 0 else [z.real, z.imag]


def _at(path: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    """Validate a decoded configuration document and build the config object."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {err.message}")

    sc = data["scene"]
    scatterers = tuple(
        _at(f"scene/scatterers/{i}", PointScatterer, s["position"], _cplx(s.get("reflectivity", 1.0)))
        for i, s in enumerate(sc.get("scatterers", []))
    )
    plates = tuple(
        _at(
            f"scene/plates/{i}", ReflectivePlate, p["corner"], p["edge_u"], p["edge_v"],
            p.get("facet_density", 200.0), _cplx(p.get("reflection_coefficient", -1.0)),
            p.get("shape", "rectangle"),
        )
        for i, p in enumerate(sc.get("plates", []))
    )
    parasitic = tuple(
        _at(f"scene/parasitic/{i}", PointScatterer, s["position"], _cplx(s.get("reflectivity", 1.0)))
        for i, s in enumerate(sc.get("parasitic", []))
    )
    scene = SceneDescription(scatterers, plates, parasitic,
                             sc.get("occlusion", True), sc.get("double_bounce", True))
    txs = tuple(
        _at(f"transmitters/{i}", TxSource, t["position"], t.get("polarization", [0, 1, 0]),
            _cplx(t.get("moment", 1.0)))
        for i, t in enumerate(data["transmitters"])
    )
    fr = data["frequency"]
    grid = _at("frequency", make_frequency_grid, fr["f_min"], fr["f_max"], fr["count"])
    pl = data["plane"]
    plane = _at("plane", MeasurementPlane, pl["z"], pl["x"][0], pl["x"][1], pl["y"][0], pl["y"][1],
                pl["nx"], pl["ny"])
    comps = _at("plane/components", as_components, pl.get("components", ["x", "y"]))

    pp = data.get("pipeline", {})
    tx_subset = pp.get("tx_subset")
    if tx_subset is not None:
        bad = [n for n in tx_subset if n > len(txs)]
        if bad:
            raise ConfigError(f"pipeline/tx_subset: transmitter {bad[0]} does not exist (1..{len(txs)})")
        tx_subset = tuple(sorted(set(n - 1 for n in tx_subset)))
    freq_subset = pp.get("freq_subset")
    if freq_subset is not None:
        freq_subset = tuple(sorted(set(f - 1 for f in freq_subset)))
        _at("pipeline/freq_subset", grid.subset, freq_subset)
    opts = PipelineOptions(
        mode=pp.get("mode", "coherent"),
        tx_subset=tx_subset,
        freq_subset=freq_subset,
        include_incident=pp.get("include_incident", False),
        noise_snr_db=pp.get("noise_snr_db"),
        seed=pp.get("seed", 0),
        padding=pp.get("padding", 1),
        floor_db=pp.get("floor_db", -30.0),
        mip_axes=tuple(pp.get("mip_axes", ["y"])),
        threshold_db=pp.get("threshold_db", -10.0),
        truth_dilation=pp.get("truth_dilation", 1),
        ghost_radius=pp.get("ghost_radius", 2),
        threads=pp.get("threads", 1),
    )
    vo = data["volume"]
    cfg = ScenarioConfig(
        name=data.get("name", "scenario"),
        scene=scene,
        txs=txs,
        f_min=grid.f_min, f_max=grid.f_max, f_count=grid.count,
        plane=plane,
        components=comps,
        volume_x=tuple(vo["x"]), volume_y=tuple(vo["y"]), volume_z=tuple(vo["z"]), dz=vo["dz"],
        options=opts,
        output_dir=data.get("output_dir", "out"),
        assumptions=tuple(data.get("assumptions", [])),
    )
    volume = _at("volume", cfg.volume)
    _at("volume", volume.check_clear_of, plane)
    if volume.z_range[1] >= plane.z:
        raise ConfigError("volume/z: the imaging volume must lie below the measurement plane")
    return cfg


def config_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    sc = cfg.scene
    o = cfg.options
    pipeline: dict[str, Any] = {
        "mode": o.mode,
        "include_incident": o.include_incident,
        "noise_snr_db": o.noise_snr_db,
        "seed": o.seed,
        "padding": o.padding,
        "floor_db": o.floor_db,
        "mip_axes": list(o.mip_axes),
        "threshold_db": o.threshold_db,
        "truth_dilation": o.truth_dilation,
        "ghost_radius": o.ghost_radius,
        "threads": o.threads,
    }
    if o.tx_subset is not None:
        pipeline["tx_subset"] = [n + 1 for n in o.tx_subset]
    if o.freq_subset is not None:
        pipeline["freq_subset"] = [f + 1 for f in o.freq_subset]
    return {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "assumptions": list(cfg.assumptions),
        "scene": {
            "scatterers": [
                {"position": s.position.tolist(), "reflectivity": _cplx_out(s.reflectivity)}
                for s in sc.scatterers
            ],
            "plates": [
                {
                    "corner": p.corner.tolist(), "edge_u": p.edge_u.tolist(), "edge_v": p.edge_v.tolist(),
                    "facet_density": p.facet_density,
                    "reflection_coefficient": _cplx_out(p.reflection_coefficient),
                    "shape": p.shape,
                }
                for p in sc.plates
            ],
            "parasitic": [
                {"position": s.position.tolist(), "reflectivity": _cplx_out(s.reflectivity)}
                for s in sc.parasitic
            ],
            "occlusion": sc.occlusion_enabled,
            "double_bounce": sc.double_bounce_enabled,
        },
        "transmitters": [
            {"position": t.position.tolist(), "polarization": t.polarization.tolist(),
             "moment": _cplx_out(t.moment)}
            for t in cfg.txs
        ],
        "frequency": {"f_min": cfg.f_min, "f_max": cfg.f_max, "count": cfg.f_count},
        "plane": {
            "z": cfg.plane.z,
            "x": [cfg.plane.x_min, cfg.plane.x_max],
            "y": [cfg.plane.y_min, cfg.plane.y_max],
            "nx": cfg.plane.nx,
            "ny": cfg.plane.ny,
            "components": [c.name.lower() for c in cfg.components],
        },
        "volume": {"x": list(cfg.volume_x), "y": list(cfg.volume_y), "z": list(cfg.volume_z), "dz": cfg.dz},
        "pipeline": pipeline,
        "output_dir": cfg.output_dir,
    }


def parse_config(path) -> ScenarioConfig:
    """Read and validate a JSON scenario file.

    Raises :class:`ConfigError` with line/column for syntax errors and a
    field path for schema or invariant violations; ``OSError`` for I/O.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- presets

PAPER_PLANE = dict(z=1.0, x_min=-0.75, x_max=0.75, y_min=-0.75, y_max=0.75, nx=101, ny=101)
PYRAMID_TX = ((-0.25, 0.0, 0.25), (0.25, 0.0, 0.25))
DIHEDRAL_TX_X = (-0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3)


def _facet_density(f_max: float) -> float:
    """Facets per meter giving a spacing of at most a quarter wavelength at ``f_max``."""
    from .grids import C0
    return float(np.ceil(4 * f_max / C0))


def pyramid_plates(base: float = 0.3, height: float = 0.15, density: float = 134.0,
                   gamma: complex = -1.0) -> tuple[ReflectivePlate, ...]:
    """Square pyramid shell on z = 0 centred at the origin, as eight right triangles.

    Each lateral face is split along its apothem so that both halves have
    orthogonal legs meeting at the base-edge midpoint.
    """
    h = base / 2
    apex = np.array([0.0, 0.0, height])
    plates = []
    for mid, along in (
        ((h, 0, 0), (0, h, 0)),
        ((-h, 0, 0), (0, h, 0)),
        ((0, h, 0), (h, 0, 0)),
        ((0, -h, 0), (h, 0, 0)),
    ):
        m = np.array(mid, float)
        a = np.array(along, float)
        for sign in (1, -1):
            plates.append(ReflectivePlate(m, sign * a, apex - m, density, gamma, "triangle"))
    return tuple(plates)


def dihedral_plates(size: float = 0.3, density: float = 160.0,
                    gamma: complex = -1.0) -> tuple[ReflectivePlate, ...]:
    """90 degree corner reflector: square plates at +-45 deg meeting along the y axis, opening to +z."""
    s = size / np.sqrt(2)
    corner = (0.0, -size / 2, 0.0)
    along = (0.0, size, 0.0)
    return (
        ReflectivePlate(corner, along, (-s, 0.0, s), density, gamma),
        ReflectivePlate(corner, along, (s, 0.0, s), density, gamma),
    )


def preset(name: str, fast: bool = False) -> ScenarioConfig:
    """Built-in scenario: ``pyramid``, ``dihedral`` or ``pointcal``.

    ``fast=True`` halves the frequency count and uses a 51 x 51 plane over
    the same aperture (spatially undersampled at the top of the band); the
    spectral padding doubles so the voxel pitch is unchanged.
    """
    ypol = (0.0, 1.0, 0.0)
    if name == "pyramid":
        f = (6e9, 10e9, 21)
        scene = SceneDescription((), pyramid_plates(density=_facet_density(f[1])), (), True, False)
        txs = tuple(TxSource(p, ypol) for p in PYRAMID_TX)
        vol = dict(volume_x=(-0.4, 0.4), volume_y=(-0.4, 0.4), volume_z=(-0.1, 0.4), dz=0.005)
        opts = PipelineOptions(padding=3, mip_axes=("y", "z"))
        notes = (
            "pyramid base 0.3 m and height 0.15 m are assumed (dimensions not given)",
            "imaging volume and 5 mm voxel pitch are assumed",
        )
    elif name == "dihedral":
        f = (2e9, 12e9, 41)
        scene = SceneDescription((), dihedral_plates(density=_facet_density(f[1])), (), True, True)
        txs = tuple(TxSource((x, 0.0, 0.4), ypol) for x in DIHEDRAL_TX_X)
        vol = dict(volume_x=(-0.4, 0.4), volume_y=(0.0, 0.0), volume_z=(-0.2, 0.5), dz=0.005)
        opts = PipelineOptions(padding=1, mip_axes=("y",))
        notes = (
            "dihedral plates 0.3 m x 0.3 m are assumed (dimensions not given)",
            "image is the y = 0 xz-plane; x pitch follows the 15 mm plane lattice, z pitch 5 mm",
        )
    elif name == "pointcal":
        f = (6e9, 10e9, 21)
        scene = SceneDescription((PointScatterer((0.0, 0.0, 0.0), 1.0),), (), (), False, False)
        txs = tuple(TxSource(p, ypol) for p in PYRAMID_TX)
        vol = dict(volume_x=(-0.1, 0.1), volume_y=(-0.1, 0.1), volume_z=(-0.1, 0.1), dz=0.005)
        opts = PipelineOptions(padding=3, mip_axes=("y", "z"))
        notes = ("single unit scatterer at the origin; pyramid-study geometry",)
    else:
        raise ValueError(f"unknown preset {name!r} (choose pyramid, dihedral or pointcal)")

    plane = dict(PAPER_PLANE)
    if fast:
        f = (f[0], f[1], (f[2] + 1) // 2)
        plane.update(nx=51, ny=51)
        # twice the plane spacing, so twice the refinement keeps the voxel pitch
        opts = replace(opts, padding=2 * opts.padding)
        notes = notes + ("fast variant: 51 x 51 plane and half the frequencies",)
    return ScenarioConfig(
        name=name + ("-fast" if fast else ""),
        scene=scene,
        txs=txs,
        f_min=f[0], f_max=f[1], f_count=f[2],
        plane=MeasurementPlane(**plane),
        components=as_components(("x", "y")),
        options=opts,
        output_dir=f"out/{name}",
        assumptions=notes,
        **vol,
    )


# ---------------------------------------------------------------- pipeline


@dataclass
class PipelineResult:
    out_dir: Path
    images: dict[str, CombinedImage]
    reports: list[MetricsReport]
    manifest: dict[str, str]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _stage(name: str, timings: dict):
    class _Timer:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, exc_type, exc, tb):
            dt = time.perf_counter() - self.t0
            timings[name] = dt
            log.info("stage %-9s %.2f s", name, dt)
            if exc is not None and not isinstance(exc, PipelineError):
                raise PipelineError(name, exc) from exc
            return False

    return _Timer()


def run_pipeline(cfg: ScenarioConfig, out_dir=None) -> PipelineResult:
    """Simulate, image, combine, score and export one scenario.

    Artifacts are written under ``out_dir`` (default ``cfg.output_dir``)
    together with ``manifest.json`` listing their SHA-256 hashes.  On
    failure the partially written output directory is removed and a
    :class:`PipelineError` naming the stage is raised.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    existed = out.exists()
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    timings: dict[str, float] = {}
    o = cfg.options
    try:
        grid = cfg.grid
        with _stage("simulate", timings):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SamplingWarning)
                if cfg.plane.is_undersampled(grid):
                    log.warning("plane spacing exceeds lambda_min/2 for %s", cfg.name)
                cube = simulate(cfg.scene, cfg.txs, grid, cfg.plane, cfg.components,
                                o.include_incident, o.noise_snr_db, o.seed, o.threads)
        with _stage("invert", timings):
            volume = cfg.volume()
            images = ImageSet(cube, volume, o.padding)
            ns = o.tx_subset if o.tx_subset is not None else tuple(range(len(cfg.txs)))
            fs = o.freq_subset if o.freq_subset is not None else tuple(range(grid.count))
            if max(ns) >= len(cfg.txs):
                raise IndexError(f"transmitter subset {[n + 1 for n in ns]} exceeds {len(cfg.txs)}")
        with _stage("combine", timings):
            modes = ("coherent", "incoherent") if o.mode == "both" else (o.mode,)
            combined = {m: subset_combine(images, fs, ns, m, grid, cfg.txs) for m in modes}
        with _stage("analyze", timings):
            truth = GroundTruthMask.from_scene(cfg.scene, volume, o.truth_dilation, o.ghost_radius)
            reports = [score_image(img, cfg.scene, m, truth, o.threshold_db) for m, img in combined.items()]
        with _stage("export", timings):
            summary = {
                "scenario": cfg.name,
                "shape": list(cube.shape),
                "axes": ["tx", "frequency", "component", "sample"],
                "components": [c.name.lower() for c in cube.components],
                "incident_included": cube.incident_included,
                "mean_power": float(np.mean(np.abs(cube.values) ** 2)),
                "peak_magnitude": float(np.max(np.abs(cube.values))) if cube.values.size else 0.0,
                "tx_subset": [n + 1 for n in ns],
                "freq_subset": [f + 1 for f in fs],
            }
            p = out / "cube_summary.json"
            p.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            written.append(p)
            for m, img in combined.items():
                base = out / f"combined_{m}"
                written += nio.write_volume(img, base)
                for axis in o.mip_axes:
                    written += nio.write_pgm(mip(img, axis), out / f"mip_{m}_{axis}",
                                             pitch=_mip_pitch(volume, axis), floor_db=o.floor_db)
                    if img.is_empty:
                        log.warning("%s image is empty (all zero)", m)
            p = out / "metrics.csv"
            nio.write_metrics_csv(reports, p)
            written.append(p)
            manifest = {q.name: _sha256(q) for q in sorted(written)}
            mp = out / "manifest.json"
            mp.write_text(json.dumps({"artifacts": manifest}, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
    except BaseException:
        if existed:
            for q in written:
                q.unlink(missing_ok=True)
        else:
            shutil.rmtree(out, ignore_errors=True)
        raise
    log.info("total %.2f s", sum(timings.values()))
    return PipelineResult(out, combined, reports, manifest)


def _mip_pitch(volume: ImagingVolume, axis: str) -> tuple[float, float]:
    dx, dy, dz = volume.spacing
    return {"x": (dz, dy), "y": (dz, dx), "z": (dy, dx)}[axis]
