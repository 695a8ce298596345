import json

import numpy as np
import png
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ecoserv.raster_io import (
    Raster, RasterFormatError, grayscale_intensity, read_raster, render_grayscale, write_png,
    write_raster)


def test_tiny_container_reads_back(tmp_path):
    raster = Raster(np.array([[[0.0, 1.0], [2.0, 3.0]]]))
    write_raster(raster, tmp_path / "tiny.ecr")
    back = read_raster(tmp_path / "tiny.ecr")
    assert (back.width, back.height, back.bands) == (2, 2, 1)
    assert back.data.ravel().tolist() == [0.0, 1.0, 2.0, 3.0]
    assert (tmp_path / "tiny.ecr").stat().st_size == 4 * 8


def test_random_raster_round_trip_is_bit_identical(tmp_path):
    rng = np.random.default_rng(64)
    raster = Raster(rng.normal(size=(8, 64, 64)) * 1e3,
                    band_names=[f"b{i}" for i in range(8)], geo={"crs": "local"})
    write_raster(raster, tmp_path / "r.ecr")
    back = read_raster(tmp_path / "r.ecr.json")
    assert back.identical_to(raster)
    assert back.data.tobytes() == raster.data.tobytes()


def test_truncated_payload_is_a_length_mismatch(tmp_path):
    raster = Raster(np.ones((8, 5, 5)))
    write_raster(raster, tmp_path / "t.ecr")
    payload = (tmp_path / "t.ecr").read_bytes()
    (tmp_path / "t.ecr").write_bytes(payload[:-8])
    with pytest.raises(RasterFormatError, match="length mismatch"):
        read_raster(tmp_path / "t.ecr")


def test_malformed_header(tmp_path):
    (tmp_path / "bad.ecr.json").write_text("{not json")
    with pytest.raises(RasterFormatError, match="malformed header"):
        read_raster(tmp_path / "bad.ecr")
    (tmp_path / "bad.ecr.json").write_text(json.dumps({"width": 2}))
    with pytest.raises(RasterFormatError):
        read_raster(tmp_path / "bad.ecr")


def test_missing_file_is_file_not_found(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_raster(tmp_path / "absent.ecr")


def test_nan_rejected_unless_declared_nodata(tmp_path):
    data = np.ones((1, 3, 3))
    data[0, 1, 1] = np.nan
    with pytest.raises(RasterFormatError):
        Raster(data)
    with pytest.raises(RasterFormatError):
        Raster(data, nodata=-9999.0)
    raster = Raster(data, nodata=float("nan"))
    assert raster.valid_mask().sum() == 8
    write_raster(raster, tmp_path / "n.ecr")
    assert read_raster(tmp_path / "n.ecr").identical_to(raster)


def test_infinity_is_rejected():
    with pytest.raises(RasterFormatError):
        Raster(np.array([[[np.inf]]]))


def test_band_names_must_match_band_count():
    with pytest.raises(RasterFormatError):
        Raster(np.zeros((2, 2, 2)), band_names=["only_one"])


def test_raster_is_immutable():
    raster = Raster(np.zeros((1, 2, 2)))
    with pytest.raises(ValueError):
        raster.data[0, 0, 0] = 1.0


def test_render_endpoints_and_midpoint():
    v = np.array([0.0, 2.0, 1.0, -5.0, 9.0, np.nan])
    assert grayscale_intensity(v, 0, 2).tolist() == [0, 255, 128, 0, 255, 0]


def test_render_rejects_empty_range():
    with pytest.raises(ValueError):
        grayscale_intensity(np.zeros(3), 1.0, 1.0)


def test_rendered_png_reads_back(tmp_path):
    values = np.linspace(0, 2, 64 * 32).reshape(32, 64)
    render_grayscale(values, 0, 2, tmp_path / "g.png")
    back = read_raster(tmp_path / "g.png")
    assert back.bands == 1 and back.shape == (32, 64)
    assert np.array_equal(back.data[0], grayscale_intensity(values, 0, 2))


def test_sixteen_bit_png(tmp_path):
    values = np.arange(12, dtype=np.uint16).reshape(3, 4) * 5000
    write_png(values, tmp_path / "w.png", bitdepth=16)
    back = read_raster(tmp_path / "w.png")
    assert np.array_equal(back.data[0], values.astype(float))


def test_png_with_unsupported_depth(tmp_path):
    with open(tmp_path / "low.png", "wb") as fh:
        png.Writer(4, 1, greyscale=True, bitdepth=2).write(fh, [[0, 1, 2, 3]])
    with pytest.raises(RasterFormatError, match="bit depth"):
        read_raster(tmp_path / "low.png")


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=3, max_dims=3, max_side=6),
                  elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_round_trip_law(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("rt") / "r.ecr"
    raster = Raster(data)
    write_raster(raster, path)
    assert read_raster(path).identical_to(raster)


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_render_is_monotone(a, b):
    v1, v2 = min(a, b), max(a, b)
    i1, i2 = grayscale_intensity(np.array([v1, v2]), -3.0, 4.0)
    assert i1 <= i2
