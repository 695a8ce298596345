"""SNIC superpixel segmentation (single pass, priority-queue driven).

Each seed starts a cluster. Candidate pixels wait in one global min-heap
keyed by their distance to the cluster that proposed them; popping the
closest candidate assigns it for good, updates that cluster's running
centroid and proposes its unassigned 4-neighbours. Pixels are never
reassigned, so one sweep over the heap yields the final segmentation.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import ValidationError, check_positive_float, check_positive_int
from .raster_io import Raster

DEFAULT_COMPACTNESS = 10.0


@dataclass(frozen=True)
class SnicParams:
    k: int
    compactness: float = DEFAULT_COMPACTNESS

    def __post_init__(self):
        check_positive_int(self.k, "k")
        check_positive_float(self.compactness, "compactness")


@dataclass(frozen=True)
class SegmentRecord:
    id: int
    size: int
    spatial_centroid: tuple
    color_centroid: tuple
    bounding_box: tuple  # (xmin, ymin, xmax, ymax), inclusive


@dataclass(frozen=True, eq=False)
class SegmentationMap:
    """Per-pixel superpixel ids plus one record per superpixel."""

    labels: np.ndarray
    segments: tuple
    pops: int = 0

    @property
    def n_segments(self):
        return len(self.segments)

    @property
    def shape(self):
        return self.labels.shape

    def sizes(self):
        return np.array([s.size for s in self.segments], dtype=np.int64)

    def to_raster(self):
        """Label map as a single-band raster (ids stored as floats)."""
        return Raster(self.labels.astype(np.float64)[np.newaxis], band_names=("segment_id",))

    def write_segments_csv(self, path):
        n_bands = len(self.segments[0].color_centroid) if self.segments else 0
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "size", "cx", "cy"] + [f"band{b}_mean" for b in range(n_bands)])
            for s in self.segments:
                writer.writerow(
                    [s.id, s.size, repr(s.spatial_centroid[0]), repr(s.spatial_centroid[1])]
                    + [repr(c) for c in s.color_centroid])


def segmentation_from_labels(labels, raster=None):
    """Rebuild a :class:`SegmentationMap` from a stored label map."""
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    return SegmentationMap(labels, segment_records(labels, raster))


def segment_records(labels, raster=None):
    """Per-segment records of a dense label map.

    Color centroids are computed from ``raster`` when given, skipping nodata.
    """
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if labels.ndim != 2:
        raise ValidationError(f"label map must be 2-D, got shape {labels.shape}")
    height, width = labels.shape
    flat = labels.ravel()
    n = int(flat.max()) + 1 if flat.size else 0
    sizes = np.bincount(flat, minlength=n)
    if np.any(sizes == 0):
        raise ValidationError("label ids must be dense: some id in [0, max] has no pixels")
    ys, xs = np.divmod(np.arange(flat.size), width)
    cx = np.bincount(flat, weights=xs, minlength=n) / sizes
    cy = np.bincount(flat, weights=ys, minlength=n) / sizes
    xmin = np.full(n, width, dtype=np.int64)
    ymin = np.full(n, height, dtype=np.int64)
    xmax = np.full(n, -1, dtype=np.int64)
    ymax = np.full(n, -1, dtype=np.int64)
    np.minimum.at(xmin, flat, xs)
    np.minimum.at(ymin, flat, ys)
    np.maximum.at(xmax, flat, xs)
    np.maximum.at(ymax, flat, ys)
    if raster is not None:
        if raster.shape != labels.shape:
            raise ValidationError("label map and raster differ in shape")
        valid = raster.valid_mask().reshape(raster.bands, -1)
        values = raster.data.reshape(raster.bands, -1)
        colors = np.zeros((raster.bands, n))
        for b in range(raster.bands):
            v = valid[b]
            counts = np.bincount(flat[v], minlength=n)
            sums = np.bincount(flat[v], weights=values[b][v], minlength=n)
            np.divide(sums, counts, out=colors[b], where=counts > 0)
        colors = colors.T
    else:
        colors = np.zeros((n, 0))
    segments = tuple(
        SegmentRecord(
            id=i,
            size=int(sizes[i]),
            spatial_centroid=(float(cx[i]), float(cy[i])),
            color_centroid=tuple(float(c) for c in colors[i]),
            bounding_box=(int(xmin[i]), int(ymin[i]), int(xmax[i]), int(ymax[i])),
        )
        for i in range(n)
    )
    return segments


def grid_shape(width, height, k):
    """Rows and columns of the seed grid for a target of ``k`` seeds.

    Each side is rounded down or up from ``side / s`` with
    ``s = sqrt(width * height / k)``; the pair whose product is closest to
    ``k`` wins (fewer rows on ties).
    """
    s = math.sqrt(width * height / k)
    best = None
    for rows in {max(1, math.floor(height / s)), max(1, math.ceil(height / s))}:
        for cols in {max(1, math.floor(width / s)), max(1, math.ceil(width / s))}:
            rows_c, cols_c = min(rows, height), min(cols, width)
            key = (abs(rows_c * cols_c - k), rows_c, cols_c)
            if best is None or key < best:
                best = key
    return best[1], best[2]


def seed_grid(width, height, k):
    """Seed pixel coordinates ``(x, y)`` on a regular grid, centred in cells."""
    width = check_positive_int(width, "width")
    height = check_positive_int(height, "height")
    k = check_positive_int(k, "k")
    if k == 1:
        return [(width // 2, height // 2)]
    rows, cols = grid_shape(width, height, k)
    xs = [int((i + 0.5) * width / cols) for i in range(cols)]
    ys = [int((j + 0.5) * height / rows) for j in range(rows)]
    return [(x, y) for y in ys for x in xs]


def normalize_bands(raster):
    """Min-max scale each band to [0, 1] over its valid pixels.

    Returns ``(colors, pixel_valid)`` with ``colors`` shaped (n_pixels, bands).
    Constant bands map to 0. A pixel is invalid if any band is nodata.
    """
    valid = raster.valid_mask()
    pixel_valid = valid.all(axis=0).ravel()
    colors = np.zeros((raster.height * raster.width, raster.bands))
    for b in range(raster.bands):
        band = raster.data[b].ravel()
        vb = valid[b].ravel()
        if not vb.any():
            continue
        lo, hi = band[vb].min(), band[vb].max()
        if hi > lo:
            colors[:, b] = np.where(vb, (band - lo) / (hi - lo), 0.0)
    return colors, pixel_valid


@njit(cache=True)
def _heap_less(dist, seq, a, b):
    return dist[a] < dist[b] or (dist[a] == dist[b] and seq[a] < seq[b])


@njit(cache=True)
def _snic_kernel(colors, pixel_valid, width, height, seed_idx, inv_s2, inv_m2):
    n_pix = width * height
    n_bands = colors.shape[1]
    k = seed_idx.shape[0]
    labels = np.full(n_pix, -1, dtype=np.int64)

    cap = 4 * n_pix + k + 1
    h_dist = np.empty(cap, dtype=np.float64)
    h_seq = np.empty(cap, dtype=np.int64)
    h_pix = np.empty(cap, dtype=np.int64)
    h_lab = np.empty(cap, dtype=np.int64)
    size = 0
    seq = 0

    sum_x = np.zeros(k)
    sum_y = np.zeros(k)
    count = np.zeros(k)
    sum_c = np.zeros((k, n_bands))
    count_c = np.zeros(k)

    for i in range(k):
        # push seed i
        pos = size
        size += 1
        h_dist[pos] = 0.0
        h_seq[pos] = seq
        h_pix[pos] = seed_idx[i]
        h_lab[pos] = i
        seq += 1
        # seeds arrive in increasing seq with equal keys: no sift-up needed

    pops = 0
    while size > 0:
        # pop root
        p = h_pix[0]
        lab = h_lab[0]
        size -= 1
        pops += 1
        if size > 0:
            h_dist[0] = h_dist[size]
            h_seq[0] = h_seq[size]
            h_pix[0] = h_pix[size]
            h_lab[0] = h_lab[size]
            i = 0
            while True:
                left = 2 * i + 1
                if left >= size:
                    break
                j = left
                right = left + 1
                if right < size and _heap_less(h_dist, h_seq, right, left):
                    j = right
                if _heap_less(h_dist, h_seq, j, i):
                    h_dist[i], h_dist[j] = h_dist[j], h_dist[i]
                    h_seq[i], h_seq[j] = h_seq[j], h_seq[i]
                    h_pix[i], h_pix[j] = h_pix[j], h_pix[i]
                    h_lab[i], h_lab[j] = h_lab[j], h_lab[i]
                    i = j
                else:
                    break
        if labels[p] >= 0:
            continue

        labels[p] = lab
        py = p // width
        px = p - py * width
        sum_x[lab] += px
        sum_y[lab] += py
        count[lab] += 1.0
        if pixel_valid[p]:
            for b in range(n_bands):
                sum_c[lab, b] += colors[p, b]
            count_c[lab] += 1.0

        mx = sum_x[lab] / count[lab]
        my = sum_y[lab] / count[lab]
        for nb in range(4):
            if nb == 0:
                qx, qy = px - 1, py
            elif nb == 1:
                qx, qy = px + 1, py
            elif nb == 2:
                qx, qy = px, py - 1
            else:
                qx, qy = px, py + 1
            if qx < 0 or qx >= width or qy < 0 or qy >= height:
                continue
            q = qy * width + qx
            if labels[q] >= 0:
                continue
            dxy = ((qx - mx) ** 2 + (qy - my) ** 2) * inv_s2
            dc = 0.0
            if pixel_valid[q] and count_c[lab] > 0:
                for b in range(n_bands):
                    diff = colors[q, b] - sum_c[lab, b] / count_c[lab]
                    dc += diff * diff
            d = math.sqrt(dxy + dc * inv_m2)
            # push with sift-up
            i = size
            size += 1
            h_dist[i] = d
            h_seq[i] = seq
            h_pix[i] = q
            h_lab[i] = lab
            seq += 1
            while i > 0:
                parent = (i - 1) // 2
                if _heap_less(h_dist, h_seq, i, parent):
                    h_dist[i], h_dist[parent] = h_dist[parent], h_dist[i]
                    h_seq[i], h_seq[parent] = h_seq[parent], h_seq[i]
                    h_pix[i], h_pix[parent] = h_pix[parent], h_pix[i]
                    h_lab[i], h_lab[parent] = h_lab[parent], h_lab[i]
                    i = parent
                else:
                    break
    return labels, pops


def segment(raster, params):
    """Segment ``raster`` into roughly ``params.k`` superpixels.

    Colors are min-max normalized per band, and the distance from a
    candidate pixel to a cluster is
    ``sqrt(spatial_dist**2 / s**2 + color_dist**2 / compactness**2)`` with
    ``s = sqrt(width * height / k)``.
    """
    if not isinstance(params, SnicParams):
        params = SnicParams(**params)
    n_pix = raster.width * raster.height
    if params.k > n_pix:
        raise ValidationError(f"k={params.k} exceeds the pixel count {n_pix}")
    colors, pixel_valid = normalize_bands(raster)
    seeds = [
        y * raster.width + x
        for x, y in seed_grid(raster.width, raster.height, params.k)
        if pixel_valid[y * raster.width + x]
    ]
    if not seeds:
        raise ValidationError("every seed position is nodata")
    s2 = n_pix / params.k
    labels, pops = _snic_kernel(
        colors, pixel_valid, raster.width, raster.height,
        np.asarray(seeds, dtype=np.int64), 1.0 / s2, 1.0 / params.compactness ** 2)
    labels = labels.reshape(raster.shape)
    return SegmentationMap(labels, segment_records(labels, raster), pops=int(pops))


def _as_raster(X):
    if isinstance(X, Raster):
        return X
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[np.newaxis]
    if X.ndim != 3:
        raise ValidationError(f"expected a Raster or a (bands, height, width) array, got {X.shape}")
    return Raster(X)


class SNICSegmenter(ClusterMixin, BaseEstimator):
    """Estimator wrapper around :func:`segment`.

    ``fit`` accepts a :class:`Raster` or a ``(bands, height, width)`` array
    and sets ``labels_`` (2-D) and ``segmentation_``.
    """

    def __init__(self, n_segments=5000, compactness=DEFAULT_COMPACTNESS):
        self.n_segments = n_segments
        self.compactness = compactness

    def fit(self, X, y=None):
        raster = _as_raster(X)
        self.segmentation_ = segment(raster, SnicParams(self.n_segments, self.compactness))
        self.labels_ = self.segmentation_.labels
        self.n_segments_ = self.segmentation_.n_segments
        return self
