"""Multi-band raster container, ``.ecr`` storage and PNG import/export.

An ``.ecr`` raster is two files: ``name.ecr.json`` (header) and the raw
payload it points to via ``data_file`` (little-endian float64, band 0
first, row-major within each band).
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import png

from ._validation import check_range

HEADER_SUFFIX = ".json"
DTYPE = "f64le"


class RasterFormatError(ValueError):
    """Malformed or inconsistent raster file."""


@dataclass(frozen=True, eq=False)
class Raster:
    """Immutable multi-band raster.

    ``data`` has shape ``(bands, height, width)``; its C-order flattening is
    the band-sequential payload stored on disk.
    """

    data: np.ndarray
    band_names: tuple = None
    nodata: float = None
    geo: dict = field(default=None, repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, order="C", copy=True)
        if data.ndim == 2:
            data = data[np.newaxis]
        if data.ndim != 3 or min(data.shape) < 1:
            raise RasterFormatError(
                f"raster data must be (bands, height, width) with positive sizes, got {data.shape}")
        nodata = self.nodata
        if nodata is not None:
            nodata = float(nodata)
        finite = np.isfinite(data)
        if not finite.all():
            bad = ~finite
            if nodata is None or not (math.isnan(nodata) and np.isnan(data[bad]).all()):
                raise RasterFormatError(
                    "raster contains non-finite values that are not the declared nodata")
        data.setflags(write=False)
        names = self.band_names
        if names is not None:
            names = tuple(str(n) for n in names)
            if len(names) != data.shape[0]:
                raise RasterFormatError(
                    f"band_names has {len(names)} entries for {data.shape[0]} bands")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "band_names", names)
        object.__setattr__(self, "nodata", nodata)

    @property
    def bands(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    @property
    def shape(self):
        """``(height, width)`` of the pixel grid."""
        return self.data.shape[1:]

    def valid_mask(self):
        """Per-band boolean mask of pixels that are not nodata."""
        if self.nodata is None:
            return np.ones(self.data.shape, dtype=bool)
        if math.isnan(self.nodata):
            return ~np.isnan(self.data)
        return self.data != self.nodata

    def identical_to(self, other):
        """Bit-exact equality of payload and metadata."""
        return (
            isinstance(other, Raster)
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
            and self.band_names == other.band_names
            and _same_nodata(self.nodata, other.nodata)
            and self.geo == other.geo
        )


def _same_nodata(a, b):
    if a is None or b is None:
        return a is b
    return a == b or (math.isnan(a) and math.isnan(b))


def _header_and_data_paths(path):
    path = os.fspath(path)
    if path.endswith(".ecr" + HEADER_SUFFIX):
        return path, path[: -len(HEADER_SUFFIX)]
    if path.endswith(".ecr"):
        return path + HEADER_SUFFIX, path
    raise RasterFormatError(f"not an .ecr path: {path}")


def read_raster(path):
    """Load an ``.ecr`` container or an 8/16-bit PNG as a :class:`Raster`."""
    path = os.fspath(path)
    if path.lower().endswith(".png"):
        return _read_png(path)
    header_path, _ = _header_and_data_paths(path)
    try:
        with open(header_path, encoding="utf-8") as fh:
            header = json.load(fh)
    except json.JSONDecodeError as exc:
        raise RasterFormatError(f"malformed header {header_path}: {exc}") from exc
    if not isinstance(header, dict):
        raise RasterFormatError(f"malformed header {header_path}: not an object")
    try:
        width, height, bands = (int(header[k]) for k in ("width", "height", "bands"))
        data_file = header["data_file"]
    except (KeyError, TypeError, ValueError) as exc:
        raise RasterFormatError(f"malformed header {header_path}: {exc}") from exc
    if header.get("dtype", DTYPE) != DTYPE:
        raise RasterFormatError(f"unsupported dtype {header.get('dtype')!r}")
    if min(width, height, bands) < 1:
        raise RasterFormatError("width, height and bands must be positive")
    data_path = os.path.join(os.path.dirname(header_path), data_file)
    payload = np.fromfile(data_path, dtype="<f8")
    expected = width * height * bands
    if payload.size != expected or os.path.getsize(data_path) != expected * 8:
        raise RasterFormatError(
            f"payload length mismatch: header declares {expected} values, "
            f"{os.path.getsize(data_path)} bytes found")
    return Raster(
        payload.reshape(bands, height, width).astype(np.float64),
        band_names=header.get("band_names"),
        nodata=header.get("nodata"),
        geo=header.get("geo"),
    )


def write_raster(raster, path):
    """Write ``raster`` as ``.ecr`` (payload) + ``.ecr.json`` (header)."""
    header_path, data_path = _header_and_data_paths(path)
    header = {
        "width": raster.width,
        "height": raster.height,
        "bands": raster.bands,
        "dtype": DTYPE,
        "band_names": list(raster.band_names) if raster.band_names else None,
        "nodata": _json_nodata(raster.nodata),
        "geo": raster.geo,
        "data_file": os.path.basename(data_path),
    }
    raster.data.astype("<f8", copy=False).tofile(data_path)
    with open(header_path, "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _json_nodata(nodata):
    if nodata is None:
        return None
    # JSON has no NaN literal; Python's json emits/reads it anyway.
    return float(nodata)


def _read_png(path):
    reader = png.Reader(filename=path)
    try:
        width, height, rows, info = reader.asDirect()
        bitdepth = info["bitdepth"]
        planes = info["planes"]
        if bitdepth not in (8, 16):
            raise RasterFormatError(f"unsupported PNG bit depth {bitdepth}")
        pixels = np.vstack([np.asarray(row, dtype=np.uint32) for row in rows])
    except png.Error as exc:
        raise RasterFormatError(f"cannot decode PNG {path}: {exc}") from exc
    pixels = pixels.reshape(height, width, planes).astype(np.float64)
    return Raster(np.moveaxis(pixels, -1, 0))


def write_png(values, path, bitdepth=8):
    """Write a 2-D (grey) or 3-D ``(h, w, planes)`` integer array as PNG."""
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[..., np.newaxis]
    height, width, planes = values.shape
    if planes not in (1, 2, 3, 4):
        raise ValueError(f"PNG supports 1-4 channels, got {planes}")
    writer = png.Writer(
        width, height, greyscale=planes < 3, alpha=planes in (2, 4), bitdepth=bitdepth)
    dtype = np.uint8 if bitdepth <= 8 else np.uint16
    rows = values.astype(dtype).reshape(height, width * planes)
    with open(path, "wb") as fh:
        writer.write(fh, rows)


def grayscale_intensity(values, lo, hi):
    """Map values to 0..255 with ``round_half_up(255 * clamp((v-lo)/(hi-lo)))``.

    NaN (nodata) maps to 0.
    """
    lo, hi = check_range(lo, hi)
    values = np.asarray(values, dtype=np.float64)
    scaled = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
    scaled = np.nan_to_num(scaled, nan=0.0)
    return np.floor(255.0 * scaled + 0.5).astype(np.uint8)


def render_grayscale(values, lo, hi, path):
    """Render a per-pixel scalar map as an 8-bit grey PNG (lo black, hi white)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 3 and values.shape[0] == 1:
        values = values[0]
    if values.ndim != 2:
        raise ValueError(f"expected a single-band map, got shape {values.shape}")
    write_png(grayscale_intensity(values, lo, hi), path)
