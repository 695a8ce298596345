"""Join point labels to superpixels to form the forest's training rows.

A superpixel hit by several points contributes one row per point, all
with the same feature vector, so a segment that straddles land uses is
trained on every label it received.
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, check_label_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelPoint:
    x: int
    y: int
    class_id: int


@dataclass(frozen=True, eq=False)
class TrainingSet:
    X: np.ndarray
    y: np.ndarray
    segment_ids: np.ndarray
    class_names: tuple
    n_dropped: int = 0

    @property
    def class_count(self):
        return len(self.class_names)

    def __len__(self):
        return self.X.shape[0]


def read_points_csv(path):
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "y", "class_id"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: header must be x,y,class_id")
        for line, row in enumerate(reader, start=2):
            try:
                points.append(LabelPoint(int(row["x"]), int(row["y"]), int(row["class_id"])))
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{line}: {exc}") from exc
    return points


def write_points_csv(points, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "class_id"])
        for p in points:
            writer.writerow([p.x, p.y, p.class_id])


def read_classes_csv(path):
    """Class names ordered by id; ids must be dense 0..C-1."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"class_id", "class_name"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: header must be class_id,class_name")
        rows = [(int(r["class_id"]), r["class_name"]) for r in reader]
    rows.sort()
    if [i for i, _ in rows] != list(range(len(rows))) or not rows:
        raise ValidationError(f"{path}: class ids must be dense 0..C-1")
    return tuple(name for _, name in rows)


def write_classes_csv(class_names, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class_id", "class_name"])
        for i, name in enumerate(class_names):
            writer.writerow([i, name])


def build_training_set(features, seg, points, class_names):
    """One training row per in-bounds point, in point order.

    ``features`` is a FeatureMatrix or ``(n_segments, F)`` array and ``seg``
    a SegmentationMap or label map. Out-of-bounds points are dropped and
    counted in ``n_dropped``.
    """
    X_all = np.asarray(getattr(features, "values", features), dtype=np.float64)
    labels = check_label_map(getattr(seg, "labels", seg))
    class_names = tuple(class_names)
    if X_all.ndim != 2 or X_all.shape[0] == 0:
        raise ValidationError("feature matrix is empty")
    if int(labels.max()) + 1 != X_all.shape[0]:
        raise ValidationError(
            f"feature matrix has {X_all.shape[0]} rows for {int(labels.max()) + 1} segments")
    if not points:
        raise ValidationError("no label points given")

    height, width = labels.shape
    coords = np.array([(p.x, p.y, p.class_id) for p in points], dtype=np.int64)
    xs, ys, cls = coords[:, 0], coords[:, 1], coords[:, 2]
    inside = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
    n_dropped = int((~inside).sum())
    if not inside.any():
        raise ValidationError("all label points fall outside the raster")
    if n_dropped:
        logger.warning("dropped %d out-of-bounds label point(s)", n_dropped)
    xs, ys, cls = xs[inside], ys[inside], cls[inside]
    if cls.min() < 0 or cls.max() >= len(class_names):
        raise ValidationError(f"class_id outside 0..{len(class_names) - 1}")
    seg_ids = labels[ys, xs]
    return TrainingSet(
        X=X_all[seg_ids], y=cls, segment_ids=seg_ids,
        class_names=class_names, n_dropped=n_dropped)
