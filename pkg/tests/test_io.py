import csv

import numpy as np
import pytest

from nfpassive.analysis import MetricsReport
from nfpassive.combine import CombinedImage
from nfpassive.grids import ImagingVolume
from nfpassive.io import read_pgm, read_volume, to_gray, write_metrics_csv, write_pgm, write_volume


def test_pgm_format_linear(tmp_path):
    written = write_pgm(np.array([[0, 1], [0.5, 0.25]]), tmp_path / "m", scale="linear")
    raw = written[0].read_bytes()
    assert raw.startswith(b"P5\n2 2\n65535\n")
    body = np.frombuffer(raw[len(b"P5\n2 2\n65535\n"):], dtype=">u2")
    np.testing.assert_array_equal(body, [0, 65535, 32768, 16384])
    side = written[1].read_text()
    assert "floor_db" in side and "pitch_row_m" in side


def test_pgm_db_mapping(tmp_path):
    m = np.array([[1.0, 10 ** (-15 / 20)], [10 ** (-30 / 20), 1e-6]])
    g = to_gray(m, floor_db=-30.0)
    np.testing.assert_array_equal(g, [[65535, 32768], [0, 0]])
    write_pgm(m, tmp_path / "d")
    np.testing.assert_array_equal(read_pgm(tmp_path / "d.pgm"), g)


def test_pgm_rejects_negative():
    with pytest.raises(ValueError):
        to_gray(np.array([[-1.0, 1.0]]))


def test_zero_map_is_black():
    assert not to_gray(np.zeros((3, 3))).any()


def test_volume_roundtrip_lossless(tmp_path, rng):
    vol = ImagingVolume((-0.1, 0.1), (0.0, 0.0), (-0.2, 0.3), 5, 1, 11)
    raw = rng.random(vol.shape)
    img = CombinedImage.from_intensity(raw, vol, [(0, 0), (1, 0)], "coherent")
    write_volume(img, tmp_path / "v")
    data, vol2, hdr = read_volume(tmp_path / "v")
    assert data.dtype == np.float32
    np.testing.assert_array_equal(data, img.intensity.astype(np.float32))
    assert vol2 == vol
    assert hdr["order"] == "x-fastest"
    # x fastest on disk
    flat = np.frombuffer((tmp_path / "v.raw").read_bytes(), dtype="<f4")
    assert flat[1] == np.float32(img.intensity[0, 0, 1])


def test_volume_size_mismatch(tmp_path, rng):
    vol = ImagingVolume((0, 1), (0, 1), (0, 1), 2, 2, 2)
    write_volume(CombinedImage.from_intensity(rng.random(vol.shape), vol, [], "coherent"), tmp_path / "v")
    (tmp_path / "v.raw").write_bytes(b"\0" * 12)
    with pytest.raises(ValueError):
        read_volume(tmp_path / "v")


def test_metrics_csv(tmp_path):
    r = MetricsReport("a", 0.0, 0.0, 0.0, 0.0, -3.5, 0.5, 0.9, 2.0)
    path = write_metrics_csv([r, r], tmp_path / "m.csv")
    rows = list(csv.reader(path.open(encoding="utf-8")))
    assert rows[0] == list(MetricsReport.COLUMNS)
    assert len(rows) == 3
    assert rows[1][5] == "-3.5"


def test_io_error_names_path(tmp_path):
    with pytest.raises(OSError, match="nowhere"):
        write_pgm(np.ones((2, 2)), tmp_path / "nowhere" / "m")
