"""Per-superpixel moment features.

Every band contributes six statistics, in this order: min, max, mean,
variance, skewness, kurtosis. Moments are population moments
(variance = m2, skewness = m3 / m2**1.5, kurtosis = m4 / m2**2, not
excess). Constant segments get skewness = kurtosis = 0.
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._validation import ValidationError, check_label_map
from .snic import DEFAULT_COMPACTNESS, SnicParams, _as_raster, segment

logger = logging.getLogger(__name__)

STATISTICS = ("min", "max", "mean", "var", "skew", "kurt")


def feature_names(n_bands):
    return [f"b{b}_{stat}" for b in range(n_bands) for stat in STATISTICS]


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """One row of ``6 * bands`` statistics per segment id."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] % len(STATISTICS):
            raise ValidationError(f"feature matrix must be (n, 6*bands), got {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def n_segments(self):
        return self.values.shape[0]

    @property
    def n_bands(self):
        return self.values.shape[1] // len(STATISTICS)

    @property
    def columns(self):
        return feature_names(self.n_bands)

    def band(self, b):
        """``(n, 6)`` block of statistics for band ``b``."""
        return self.values[:, 6 * b:6 * b + 6]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["seg_id"] + self.columns)
            for i, row in enumerate(self.values):
                writer.writerow([i] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[0] != "seg_id":
                raise ValidationError(f"{path}: expected a 'seg_id' header column")
            n_bands = (len(header) - 1) // len(STATISTICS)
            if header[1:] != feature_names(n_bands):
                raise ValidationError(f"{path}: unexpected feature columns")
            rows = [(int(r[0]), [float(v) for v in r[1:]]) for r in reader]
        if [i for i, _ in rows] != list(range(len(rows))):
            raise ValidationError(f"{path}: seg_id must run 0..n-1 in order")
        return cls(np.array([v for _, v in rows]).reshape(len(rows), 6 * n_bands))


def segment_moments(values, ids, n_segments):
    """Six statistics of ``values`` grouped by ``ids``.

    Two passes: group means first, then central moments about them.
    Returns ``(n_segments, 6)``; empty groups give a zero row.
    """
    values = np.asarray(values, dtype=np.float64)
    ids = np.asarray(ids, dtype=np.int64)
    out = np.zeros((n_segments, 6))
    counts = np.bincount(ids, minlength=n_segments).astype(np.float64)
    present = counts > 0
    if not present.any():
        return out

    lo = np.full(n_segments, np.inf)
    hi = np.full(n_segments, -np.inf)
    np.minimum.at(lo, ids, values)
    np.maximum.at(hi, ids, values)

    mean = np.zeros(n_segments)
    np.divide(np.bincount(ids, weights=values, minlength=n_segments), counts,
              out=mean, where=present)
    mean = np.clip(mean, lo, hi)
    d = values - mean[ids]
    d2 = d * d
    m2 = np.zeros(n_segments)
    m3 = np.zeros(n_segments)
    m4 = np.zeros(n_segments)
    np.divide(np.bincount(ids, weights=d2, minlength=n_segments), counts, out=m2, where=present)
    np.divide(np.bincount(ids, weights=d2 * d, minlength=n_segments), counts, out=m3, where=present)
    np.divide(np.bincount(ids, weights=d2 * d2, minlength=n_segments), counts, out=m4, where=present)

    constant = present & (lo == hi)
    m2[constant] = 0.0
    varying = present & ~constant & (m2 > 0)
    skew = np.zeros(n_segments)
    kurt = np.zeros(n_segments)
    skew[varying] = m3[varying] / m2[varying] ** 1.5
    kurt[varying] = m4[varying] / m2[varying] ** 2

    out[present, 0] = lo[present]
    out[present, 1] = hi[present]
    out[present, 2] = mean[present]
    out[:, 3] = m2
    out[:, 4] = skew
    out[:, 5] = kurt
    return out


def extract_features(raster, seg):
    """Compute the ``(n_segments, 6 * bands)`` feature matrix.

    ``seg`` is a :class:`~ecoserv.snic.SegmentationMap` or a dense 2-D label
    map. Nodata pixels are left out band by band; a segment with no valid
    pixel in some band gets zeros there and a warning.
    """
    labels = getattr(seg, "labels", seg)
    labels = check_label_map(labels, raster.shape)
    n_segments = int(labels.max()) + 1
    ids = labels.ravel()
    valid = raster.valid_mask().reshape(raster.bands, -1)
    out = np.zeros((n_segments, 6 * raster.bands))
    for b in range(raster.bands):
        v = valid[b]
        band_ids = ids if v.all() else ids[v]
        band_values = raster.data[b].ravel()
        if not v.all():
            band_values = band_values[v]
        out[:, 6 * b:6 * b + 6] = segment_moments(band_values, band_ids, n_segments)
        empty = np.bincount(band_ids, minlength=n_segments) == 0
        if empty.any():
            logger.warning("band %d: %d segment(s) are entirely nodata; using zero features",
                           b, int(empty.sum()))
    return FeatureMatrix(out)


class SuperpixelFeatures(TransformerMixin, BaseEstimator):
    """Segment a raster and reduce every superpixel to its moment features.

    ``fit_transform(raster)`` returns the ``(n_segments, 6 * bands)`` array
    and keeps the segmentation in ``segmentation_``.
    """

    def __init__(self, n_segments=5000, compactness=None):
        self.n_segments = n_segments
        self.compactness = compactness

    def fit(self, X, y=None):
        raster = _as_raster(X)
        m = DEFAULT_COMPACTNESS if self.compactness is None else self.compactness
        self.segmentation_ = segment(raster, SnicParams(self.n_segments, m))
        self.n_features_out_ = 6 * raster.bands
        return self

    def transform(self, X):
        if not hasattr(self, "segmentation_"):
            raise NotFittedError("SuperpixelFeatures is not fitted yet")
        return extract_features(_as_raster(X), self.segmentation_).values

    def get_feature_names_out(self, input_features=None):
        return np.asarray(feature_names(self.n_features_out_ // 6), dtype=object)
