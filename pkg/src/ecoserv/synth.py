"""Synthetic multi-band scenes with known land use.

Regions are painted in order on top of a full-scene background. Near a
region edge its mean and noise level cross-fade linearly into whatever
lies beneath over ``mixing_zone_width`` pixels, while the ground-truth
label switches abruptly at the edge itself, mimicking a coarse
single-label land-cover map laid over mixed real cover.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError, check_positive_int
from .raster_io import Raster
from .training_set import LabelPoint

SHAPES = ("rectangle", "disk")


@dataclass(frozen=True)
class Region:
    shape: str
    class_id: int
    mean: tuple
    sigma: tuple
    bbox: tuple = None    # rectangle: (x0, y0, x1, y1), half-open pixel bounds
    center: tuple = None  # disk: (cx, cy) in pixel coordinates
    radius: float = None
    name: str = ""


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    bands: int
    classes: tuple
    regions: tuple
    mixing_zone_width: float = 0.0
    n_points: int = 0
    seed: int = 0
    training_region: tuple = None
    band_names: tuple = field(default=None)

    def __post_init__(self):
        _validate(self)

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ValidationError("scene spec must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"scene spec: unknown field(s) {sorted(unknown)}")
        missing = {"width", "height", "bands", "classes", "regions"} - set(doc)
        if missing:
            raise ValidationError(f"scene spec: missing field(s) {sorted(missing)}")
        regions = []
        for i, r in enumerate(doc["regions"]):
            if not isinstance(r, dict):
                raise ValidationError(f"regions[{i}]: must be an object")
            bad = set(r) - set(Region.__dataclass_fields__)
            if bad:
                raise ValidationError(f"regions[{i}]: unknown field(s) {sorted(bad)}")
            try:
                regions.append(Region(
                    shape=r["shape"], class_id=r["class_id"],
                    mean=tuple(r["mean"]), sigma=tuple(r["sigma"]),
                    bbox=tuple(r["bbox"]) if r.get("bbox") is not None else None,
                    center=tuple(r["center"]) if r.get("center") is not None else None,
                    radius=r.get("radius"), name=r.get("name", "")))
            except KeyError as exc:
                raise ValidationError(f"regions[{i}]: missing field {exc}") from None
        doc = dict(doc, regions=tuple(regions), classes=tuple(doc["classes"]))
        if doc.get("training_region") is not None:
            doc["training_region"] = tuple(doc["training_region"])
        if doc.get("band_names") is not None:
            doc["band_names"] = tuple(doc["band_names"])
        return cls(**doc)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(doc)


def _validate(spec):
    for name in ("width", "height", "bands"):
        check_positive_int(getattr(spec, name), name)
    check_positive_int(spec.n_points, "n_points", minimum=0)
    check_positive_int(spec.seed, "seed", minimum=0)
    if spec.mixing_zone_width < 0:
        raise ValidationError("mixing_zone_width must be >= 0")
    if not spec.classes:
        raise ValidationError("classes must not be empty")
    if not spec.regions:
        raise ValidationError("regions must include a background region")
    w, h = spec.width, spec.height
    for i, r in enumerate(spec.regions):
        where = f"regions[{i}]"
        if r.shape not in SHAPES:
            raise ValidationError(f"{where}.shape must be one of {SHAPES}, got {r.shape!r}")
        if not (isinstance(r.class_id, int) and 0 <= r.class_id < len(spec.classes)):
            raise ValidationError(f"{where}.class_id must be in 0..{len(spec.classes) - 1}")
        if len(r.mean) != spec.bands or len(r.sigma) != spec.bands:
            raise ValidationError(f"{where}: mean and sigma need {spec.bands} entries")
        if any(s < 0 for s in r.sigma):
            raise ValidationError(f"{where}.sigma must be non-negative")
        if r.shape == "rectangle":
            if r.bbox is None or len(r.bbox) != 4:
                raise ValidationError(f"{where}.bbox must be [x0, y0, x1, y1]")
            x0, y0, x1, y1 = r.bbox
            if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
                raise ValidationError(f"{where}.bbox {list(r.bbox)} exceeds the {w}x{h} scene")
        else:
            if r.center is None or len(r.center) != 2 or r.radius is None or r.radius <= 0:
                raise ValidationError(f"{where}: disk needs center [cx, cy] and radius > 0")
            cx, cy = r.center
            if cx - r.radius < 0 or cy - r.radius < 0 or cx + r.radius > w or cy + r.radius > h:
                raise ValidationError(f"{where}: disk exceeds the {w}x{h} scene")
    bg = spec.regions[0]
    if bg.shape != "rectangle" or tuple(bg.bbox) != (0, 0, w, h):
        raise ValidationError("regions[0] must be a background rectangle covering the scene")
    if spec.training_region is not None:
        x0, y0, x1, y1 = spec.training_region
        if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
            raise ValidationError("training_region exceeds the scene")
    if spec.band_names is not None and len(spec.band_names) != spec.bands:
        raise ValidationError("band_names needs one entry per band")


def signed_distance(region, xs, ys):
    """Distance from pixel centres to the region edge, positive inside."""
    if region.shape == "disk":
        cx, cy = region.center
        return region.radius - np.hypot(xs - cx, ys - cy)
    x0, y0, x1, y1 = region.bbox
    inside = np.minimum(np.minimum(xs - x0, x1 - xs), np.minimum(ys - y0, y1 - ys))
    dx = np.maximum(np.maximum(x0 - xs, xs - x1), 0.0)
    dy = np.maximum(np.maximum(y0 - ys, ys - y1), 0.0)
    return np.where(inside >= 0, inside, -np.hypot(dx, dy))


def generate(spec):
    """Return ``(raster, truth_labels, points)`` for a scene spec.

    ``truth_labels`` is an ``(h, w)`` int array; ``points`` are drawn
    uniformly from ``spec.training_region`` (whole scene if unset).
    """
    h, w = spec.height, spec.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    bg = spec.regions[0]
    mean = np.broadcast_to(np.asarray(bg.mean, float)[:, None, None], (spec.bands, h, w)).copy()
    sigma = np.broadcast_to(np.asarray(bg.sigma, float)[:, None, None], (spec.bands, h, w)).copy()
    labels = np.full((h, w), bg.class_id, dtype=np.int64)
    for region in spec.regions[1:]:
        sd = signed_distance(region, xs, ys)
        if spec.mixing_zone_width > 0:
            alpha = np.clip(0.5 + sd / spec.mixing_zone_width, 0.0, 1.0)
        else:
            alpha = (sd >= 0).astype(np.float64)
        mean += alpha * (np.asarray(region.mean, float)[:, None, None] - mean)
        sigma += alpha * (np.asarray(region.sigma, float)[:, None, None] - sigma)
        labels[sd >= 0] = region.class_id

    noise_seq, point_seq = np.random.SeedSequence(spec.seed).spawn(2)
    noise = np.random.default_rng(noise_seq).standard_normal((spec.bands, h, w))
    raster = Raster(mean + sigma * noise, band_names=spec.band_names)

    points = []
    if spec.n_points:
        x0, y0, x1, y1 = spec.training_region or (0, 0, w, h)
        rng = np.random.default_rng(point_seq)
        px = rng.integers(x0, x1, size=spec.n_points)
        py = rng.integers(y0, y1, size=spec.n_points)
        points = [LabelPoint(int(x), int(y), int(labels[y, x])) for x, y in zip(px, py)]
    return raster, labels, points


def truth_raster(labels):
    return Raster(np.asarray(labels, dtype=np.float64)[np.newaxis], band_names=("class_id",))
