"""File exports: 16-bit PGM maps, raw float32 volumes with text headers, metrics CSV."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

import numpy as np

from .grids import ImagingVolume

__all__ = [
    "read_pgm",
    "read_volume",
    "to_gray",
    "write_metrics_csv",
    "write_pgm",
    "write_volume",
]

MAX_GRAY = 65535


def _wrap(path: Path, fn, *args):
    try:
        return fn(*args)
    except OSError as exc:
        raise OSError(exc.errno, f"{exc.strerror or exc}: {path}") from exc


def to_gray(image: np.ndarray, floor_db: float = -30.0, scale: str = "db") -> np.ndarray:
    """Map a nonnegative intensity map to uint16 gray levels.

    The map is first normalised to its own maximum.  With ``scale="db"``,
    ``[floor_db, 0]`` dB maps linearly onto ``[0, 65535]`` and anything below
    the floor is black; ``scale="linear"`` maps ``[0, 1]`` directly.
    """
    a = np.asarray(image, dtype=float)
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError("intensity map must be finite and nonnegative")
    peak = a.max() if a.size else 0.0
    if peak <= 0:
        return np.zeros(a.shape, dtype=np.uint16)
    a = a / peak
    if scale == "linear":
        g = a
    elif scale == "db":
        if not floor_db < 0:
            raise ValueError("floor_db must be negative")
        with np.errstate(divide="ignore"):
            db = 20 * np.log10(a)
        g = np.clip((db - floor_db) / -floor_db, 0.0, 1.0)
    else:
        raise ValueError(f"scale must be 'db' or 'linear', got {scale!r}")
    return np.rint(g * MAX_GRAY).astype(np.uint16)


def write_pgm(image: np.ndarray, base, pitch=(1.0, 1.0), floor_db: float = -30.0,
              scale: str = "db") -> list[Path]:
    """Write ``base.pgm`` (binary P5, 16-bit big-endian) and ``base.txt``.

    ``image`` rows are written top to bottom in array order.  ``pitch`` is
    (row, column) spacing in meters, recorded in the sidecar together with
    the floor and scale.
    """
    base = Path(base)
    a = np.asarray(image)
    if a.ndim != 2:
        raise ValueError("PGM export needs a 2-D map")
    gray = to_gray(a, floor_db, scale)
    rows, cols = gray.shape
    pgm = base.with_suffix(".pgm")
    side = base.with_suffix(".txt")
    payload = f"P5\n{cols} {rows}\n{MAX_GRAY}\n".encode("ascii") + gray.astype(">u2").tobytes()
    _wrap(pgm, pgm.write_bytes, payload)
    text = (
        f"scale = {scale}\nfloor_db = {floor_db!r}\n"
        f"pitch_row_m = {float(pitch[0])!r}\npitch_col_m = {float(pitch[1])!r}\n"
        f"rows = {rows}\ncols = {cols}\n"
    )
    _wrap(side, side.write_text, text, "utf-8")
    return [pgm, side]


def read_pgm(path) -> np.ndarray:
    """Read a binary 16-bit PGM written by :func:`write_pgm`."""
    path = Path(path)
    raw = _wrap(path, path.read_bytes)
    fields = raw.split(maxsplit=4)
    if len(fields) < 5 or fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != MAX_GRAY:
        raise ValueError(f"{path}: expected 16-bit gray, got max {maxval}")
    data = raw[len(raw) - 2 * rows * cols:]
    return np.frombuffer(data, dtype=">u2").reshape(rows, cols).astype(np.uint16)


def _header_lines(volume: ImagingVolume, provenance: str, extra: dict) -> str:
    nz, ny, nx = volume.shape
    dx, dy, dz = volume.spacing
    ox, oy, oz = volume.origin
    items = {
        "format": "float32-le",
        "order": "x-fastest",
        "dims": f"{nx} {ny} {nz}",
        "pitch_m": f"{dx!r} {dy!r} {dz!r}",
        "origin_m": f"{ox!r} {oy!r} {oz!r}",
        "extent_m": " ".join(repr(v) for v in (*volume.x_range, *volume.y_range, *volume.z_range)),
        "provenance": provenance,
    }
    items.update({k: str(v) for k, v in extra.items()})
    return "".join(f"{k} = {v}\n" for k, v in items.items())


def write_volume(image, base, provenance: str | None = None) -> list[Path]:
    """Write the normalised intensity of ``image`` as ``base.raw`` plus ``base.hdr``.

    ``image`` is a :class:`~nfpassive.combine.CombinedImage`; the raw file
    holds little-endian float32 in (z, y, x) C order, i.e. x fastest.
    """
    base = Path(base)
    vol = image.volume
    data = np.asarray(image.intensity, dtype="<f4")
    if data.shape != vol.shape:
        raise ValueError("intensity shape does not match the volume")
    if provenance is None:
        pairs = image.provenance
        provenance = f"{image.mode} n={sorted({n + 1 for n, _ in pairs})} f={sorted({f + 1 for _, f in pairs})}"
    raw = base.with_suffix(".raw")
    hdr = base.with_suffix(".hdr")
    _wrap(raw, raw.write_bytes, data.tobytes(order="C"))
    text = _header_lines(vol, provenance, {"peak": repr(float(image.peak))})
    _wrap(hdr, hdr.write_text, text, "utf-8")
    return [raw, hdr]


def _parse_header(path: Path) -> dict[str, str]:
    out = {}
    for ln, line in enumerate(_wrap(path, path.read_text, "utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_volume(base) -> tuple[np.ndarray, ImagingVolume, dict[str, str]]:
    """Read a volume written by :func:`write_volume`.

    Returns the float32 intensity array (nz, ny, nx), the reconstructed
    :class:`ImagingVolume` and the raw header fields.
    """
    base = Path(base)
    if base.suffix in (".raw", ".hdr"):
        base = base.with_suffix("")
    hdr = _parse_header(base.with_suffix(".hdr"))
    try:
        nx, ny, nz = (int(v) for v in hdr["dims"].split())
        ext = [float(v) for v in hdr["extent_m"].split()]
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{base.with_suffix('.hdr')}: malformed header ({exc})") from exc
    raw_path = base.with_suffix(".raw")
    raw = _wrap(raw_path, raw_path.read_bytes)
    if len(raw) != 4 * nx * ny * nz:
        raise ValueError(f"{raw_path}: size {len(raw)} does not match dims {nx}x{ny}x{nz}")
    data = np.frombuffer(raw, dtype="<f4").reshape(nz, ny, nx).copy()
    volume = ImagingVolume((ext[0], ext[1]), (ext[2], ext[3]), (ext[4], ext[5]), nx, ny, nz)
    return data, volume, hdr


def write_metrics_csv(reports: Iterable, path) -> Path:
    """One header row, then one row per :class:`~nfpassive.analysis.MetricsReport`."""
    from .analysis import MetricsReport

    path = Path(path)

    def fmt(v):
        return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)

    def _write():
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MetricsReport.COLUMNS)
            for r in reports:
                w.writerow([fmt(v) for v in r.row()])

    _wrap(path, _write)
    return path
