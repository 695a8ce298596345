"""Ecosystem-service scoring layer and score-distribution comparison.

A supply matrix holds, per service, one capacity weight in 0..5 for each
land-use class. A superpixel's score for a service is the
probability-weighted sum of those weights, so a soft prediction yields a
continuous score while a hard (one-hot) prediction yields a weight.
"""

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    ValidationError, check_label_map, check_positive_int, check_probabilities, check_range)
from .raster_io import Raster

MODES = ("soft", "hard")
CAPACITY_LEVELS = {
    0: "no relevant capacity",
    1: "low relevant capacity",
    2: "relevant capacity",
    3: "medium relevant capacity",
    4: "high relevant capacity",
    5: "very high relevant capacity",
}


@dataclass(frozen=True, eq=False)
class SupplyMatrix:
    services: tuple
    class_names: tuple
    weights: np.ndarray  # (n_services, n_classes) ints in 0..5

    def __post_init__(self):
        weights = np.asarray(self.weights)
        services, class_names = tuple(self.services), tuple(self.class_names)
        if weights.shape != (len(services), len(class_names)):
            raise ValidationError(
                f"weights shape {weights.shape} does not match "
                f"{len(services)} services x {len(class_names)} classes")
        if weights.dtype.kind == "f" and np.any(weights != np.round(weights)):
            raise ValidationError("capacity weights must be integers")
        weights = weights.astype(np.int64)
        if np.any((weights < 0) | (weights > 5)):
            raise ValidationError("capacity weights must lie in 0..5")
        if len(set(services)) != len(services):
            raise ValidationError("duplicate service names")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "services", services)
        object.__setattr__(self, "class_names", class_names)

    @property
    def class_count(self):
        return len(self.class_names)

    def row(self, service):
        try:
            return self.weights[self.services.index(service)]
        except ValueError:
            raise ValidationError(
                f"unknown service {service!r}; known: {', '.join(self.services)}") from None

    def weight_range(self, service):
        w = self.row(service)
        return int(w.min()), int(w.max())

    def check_classes(self, class_names):
        if tuple(class_names) != self.class_names:
            raise ValidationError(
                f"matrix columns {self.class_names} do not match classes {tuple(class_names)}")


def read_matrix_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][0] != "service" or len(rows[0]) < 2:
        raise ValidationError(f"{path}: header must be service,<class_name_0>,...")
    class_names = rows[0][1:]
    services, weights = [], []
    for line, r in enumerate(rows[1:], start=2):
        if len(r) != len(class_names) + 1:
            raise ValidationError(f"{path}:{line}: expected {len(class_names) + 1} fields")
        services.append(r[0])
        try:
            weights.append([int(v) for v in r[1:]])
        except ValueError as exc:
            raise ValidationError(f"{path}:{line}: {exc}") from exc
    if not services:
        raise ValidationError(f"{path}: no service rows")
    return SupplyMatrix(services, class_names, np.array(weights))


def write_matrix_csv(matrix, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["service", *matrix.class_names])
        for s, w in zip(matrix.services, matrix.weights):
            writer.writerow([s, *w.tolist()])


def score(probabilities, weights_row):
    """``sum_c p_c * w_c`` for one probability vector (or a batch of rows)."""
    weights_row = np.asarray(weights_row)
    if weights_row.ndim != 1:
        raise ValidationError("weights_row must be 1-D")
    if np.any((weights_row < 0) | (weights_row > 5)):
        raise ValidationError("capacity weights must lie in 0..5")
    p = check_probabilities(probabilities, n_classes=weights_row.shape[0])
    # clamp rounding overshoot (sum(p) = 1 +- ulp) back into the weight range
    out = np.clip(p @ weights_row.astype(np.float64), weights_row.min(), weights_row.max())
    return float(out) if out.ndim == 0 else out


def one_hot(class_ids, n_classes):
    out = np.zeros((len(class_ids), n_classes))
    out[np.arange(len(class_ids)), class_ids] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """Scores per service, per superpixel and broadcast to pixels.

    ``segment_scores`` is ``(n_segments, n_services)``, or None for maps
    scored directly per pixel. ``pixel_scores`` is ``(n_services, h, w)``.
    """

    services: tuple
    pixel_scores: np.ndarray
    segment_scores: np.ndarray = None
    mode: str = "soft"

    def service(self, name):
        try:
            return self.pixel_scores[self.services.index(name)]
        except ValueError:
            raise ValidationError(f"service {name!r} not in score map") from None

    def to_raster(self, service=None):
        if service is None:
            return Raster(self.pixel_scores, band_names=self.services)
        return Raster(self.service(service)[np.newaxis], band_names=(service,))


def score_segments(proba, matrix, mode="soft"):
    """``(n_segments, n_services)`` scores from class probabilities."""
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    proba = check_probabilities(proba, n_classes=matrix.class_count)
    if proba.ndim == 1:
        proba = proba[np.newaxis]
    if mode == "hard":
        proba = one_hot(np.argmax(proba, axis=1), matrix.class_count)
    scores = proba @ matrix.weights.T.astype(np.float64)
    return np.clip(scores, matrix.weights.min(axis=1), matrix.weights.max(axis=1))


def score_map(model, features, seg, matrix, mode="soft"):
    """Score every superpixel with ``model`` and broadcast to pixels."""
    if model.class_count != matrix.class_count:
        raise ValidationError(
            f"model has {model.class_count} classes but the matrix has {matrix.class_count}")
    X = getattr(features, "values", features)
    proba = model.predict_proba(X)
    return score_map_from_proba(proba, seg, matrix, mode)


def score_map_from_proba(proba, seg, matrix, mode="soft"):
    labels = check_label_map(getattr(seg, "labels", seg))
    seg_scores = score_segments(proba, matrix, mode)
    if seg_scores.shape[0] != int(labels.max()) + 1:
        raise ValidationError(
            f"{seg_scores.shape[0]} probability rows for {int(labels.max()) + 1} segments")
    pixel = np.moveaxis(seg_scores[labels], -1, 0)
    return ScoreMap(matrix.services, np.ascontiguousarray(pixel), seg_scores, mode)


def pixel_baseline_map(label_raster, matrix, service=None):
    """Score each pixel straight from its land-use class (no learning)."""
    labels = getattr(label_raster, "data", label_raster)
    labels = np.asarray(labels)
    if labels.ndim == 3:
        if labels.shape[0] != 1:
            raise ValidationError("label raster must have a single band")
        labels = labels[0]
    labels = check_label_map(labels)
    if labels.max() >= matrix.class_count:
        raise ValidationError(f"class id {int(labels.max())} outside 0..{matrix.class_count - 1}")
    services = matrix.services if service is None else (service,)
    rows = np.stack([matrix.row(s) for s in services]).astype(np.float64)
    pixel = np.moveaxis(rows.T[labels], -1, 0)
    return ScoreMap(services, np.ascontiguousarray(pixel), None, "pixel")


def region_mask(shape, region=None):
    """Boolean mask for ``region = (x0, y0, x1, y1)`` (half-open) or a mask array."""
    if region is None:
        return np.ones(shape, dtype=bool)
    if isinstance(region, np.ndarray) and region.dtype == bool:
        if region.shape != tuple(shape):
            raise ValidationError("region mask shape does not match the map")
        return region
    x0, y0, x1, y1 = (int(v) for v in region)
    mask = np.zeros(shape, dtype=bool)
    mask[max(y0, 0):max(y1, 0), max(x0, 0):max(x1, 0)] = True
    return mask


def sample_scores(values, n, seed, region=None):
    """``n`` scores at pixels drawn uniformly (with replacement) from ``region``."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValidationError("sample_scores expects a single-service 2-D map")
    n = check_positive_int(n, "n")
    flat = np.flatnonzero(region_mask(values.shape, region))
    if flat.size == 0:
        raise ValidationError("sampling region is empty")
    rng = np.random.default_rng(seed)
    picks = flat[rng.integers(0, flat.size, size=n)]
    return values.ravel()[picks]


def histogram(samples, bins, lo, hi):
    """Equal-width bin counts over [lo, hi]; the last bin is right-inclusive.

    Returns ``(edges, counts)``. Samples outside [lo, hi] are not counted.
    """
    bins = check_positive_int(bins, "bins")
    lo, hi = check_range(lo, hi)
    counts, edges = np.histogram(np.asarray(samples, dtype=np.float64), bins=bins, range=(lo, hi))
    return edges, counts


def shannon_entropy(counts):
    """Entropy in bits of a histogram's empirical distribution."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def extreme_mass(counts):
    """Share of samples in the first and last bins."""
    counts = np.asarray(counts)
    total = counts.sum()
    return float((counts[0] + counts[-1]) / total) if total else 0.0


def interior_occupancy(counts):
    """Number of nonempty bins strictly between the end bins."""
    return int(np.count_nonzero(np.asarray(counts)[1:-1]))


def write_histogram_csv(edges, counts, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            writer.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def render_histograms(histograms, path, title=None, xlabel="score"):
    """Bar chart PNG; ``histograms`` maps a label to ``(edges, counts)``."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
    n = len(histograms)
    for i, (label, (edges, counts)) in enumerate(histograms.items()):
        width = np.diff(edges) / max(n, 1)
        ax.bar(edges[:-1] + i * width, counts, width=width, align="edge", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    if n > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


class SupplyMatrixScorer(TransformerMixin, BaseEstimator):
    """Fixed-weight scoring layer: class probabilities in, service scores out.

    Nothing is learned; ``fit`` only validates the matrix. ``transform``
    maps ``(n, C)`` probabilities to ``(n, S)`` scores.
    """

    def __init__(self, matrix=None, mode="soft"):
        self.matrix = matrix
        self.mode = mode

    def fit(self, X=None, y=None):
        if not isinstance(self.matrix, SupplyMatrix):
            raise ValidationError("matrix must be a SupplyMatrix")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.n_features_in_ = self.matrix.class_count
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        return score_segments(X, self.matrix, self.mode)

    def get_feature_names_out(self, input_features=None):
        return np.asarray(self.matrix.services, dtype=object)
