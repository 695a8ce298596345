"""Random forest used as a soft classifier.

Every tree is grown on its own bootstrap sample with Gini splits over a
random subset of features. Prediction does not vote: each tree's leaf
class frequencies are normalized and the per-tree distributions are
averaged into ensemble probabilities.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import _tree_kernels as kernels
from ._validation import ValidationError, check_positive_int

MODEL_VERSION = 1


class ModelFormatError(ValueError):
    """Model file cannot be parsed or fails structural checks."""


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = None
    min_leaf: int = 1
    mtry: int = None
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.n_trees, "n_trees")
        check_positive_int(self.min_leaf, "min_leaf")
        if self.max_depth is not None:
            check_positive_int(self.max_depth, "max_depth", minimum=0)
        if self.mtry is not None:
            check_positive_int(self.mtry, "mtry")
        check_positive_int(self.seed, "seed", minimum=0)
        if self.seed >= 2 ** 64:
            raise ValidationError("seed must fit in 64 bits")

    def resolved_mtry(self, n_features):
        mtry = self.mtry if self.mtry is not None else max(1, math.isqrt(n_features))
        if mtry > n_features:
            raise ValidationError(f"mtry={mtry} exceeds the feature count {n_features}")
        return mtry


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Flat binary tree; leaves have ``feature == -1`` and carry class counts."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    @property
    def is_leaf(self):
        return self.feature < 0

    def leaf_proba(self):
        totals = self.counts.sum(axis=1, keepdims=True)
        proba = np.zeros(self.counts.shape)
        np.divide(self.counts, totals, out=proba, where=totals > 0)
        return proba

    def apply(self, X):
        """Leaf index reached by each row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape[0], dtype=np.int64)
        for i, x in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if x[self.feature[node]] <= self.threshold[node] \
                    else self.right[node]
            out[i] = node
        return out


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple
    class_count: int
    feature_dim: int
    params: ForestParams

    def __post_init__(self):
        object.__setattr__(self, "_flat", None)

    def _flatten(self):
        if self._flat is None:
            offsets = np.cumsum([0] + [t.n_nodes for t in self.trees])
            shift = lambda a, off: np.where(a >= 0, a + off, -1)  # noqa: E731
            flat = (
                offsets[:-1].astype(np.int64),
                np.concatenate([t.feature for t in self.trees]),
                np.concatenate([t.threshold for t in self.trees]),
                np.concatenate([shift(t.left, o) for t, o in zip(self.trees, offsets)]),
                np.concatenate([shift(t.right, o) for t, o in zip(self.trees, offsets)]),
                np.concatenate([t.leaf_proba() for t in self.trees]),
            )
            object.__setattr__(self, "_flat", flat)
        return self._flat

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.ndim != 2 or X.shape[1] != self.feature_dim:
            raise ValidationError(
                f"expected {self.feature_dim} features per row, got shape {X.shape}")
        proba = kernels.forest_proba(np.ascontiguousarray(X), *self._flatten())
        return proba[0] if single else proba

    def predict_hard(self, X):
        # np.argmax returns the first maximum, i.e. the lowest class id on ties
        return np.argmax(self.predict_proba(X), axis=-1)


def _grow(X, y, class_count, params, mtry, tree_index):
    state = np.array([kernels.tree_seed(params.seed, tree_index)], dtype=np.uint64)
    weights = kernels.bootstrap_counts(state, X.shape[0])
    max_depth = -1 if params.max_depth is None else params.max_depth
    return DecisionTree(*kernels.grow_tree(
        X, y, weights, class_count, mtry, max_depth, params.min_leaf, state))


def train(data, params=None, n_jobs=None):
    """Fit a :class:`ForestModel` on a TrainingSet.

    Tree ``t`` draws from an RNG seeded by ``hash(params.seed, t)``, so the
    result does not depend on ``n_jobs``.
    """
    params = params or ForestParams()
    return fit_forest(data.X, data.y, data.class_count, params, n_jobs=n_jobs)


def fit_forest(X, y, class_count, params, n_jobs=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("training set is empty")
    if y.shape != (X.shape[0],):
        raise ValidationError("X and y differ in length")
    if class_count < 1 or y.min() < 0 or y.max() >= class_count:
        raise ValidationError(f"class ids must lie in 0..{class_count - 1}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("training features must be finite")
    mtry = params.resolved_mtry(X.shape[1])
    n_jobs = 1 if n_jobs is None else max(1, int(n_jobs))

    def grow(t):
        return _grow(X, y, class_count, params, mtry, t)

    if n_jobs == 1:
        trees = [grow(t) for t in range(params.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(grow, range(params.n_trees)))
    return ForestModel(tuple(trees), int(class_count), X.shape[1], params)


def predict_proba(model, features):
    return model.predict_proba(features)


def predict_hard(model, features):
    return model.predict_hard(features)


def model_to_dict(model):
    return {
        "version": MODEL_VERSION,
        "params": asdict(model.params),
        "class_count": model.class_count,
        "feature_dim": model.feature_dim,
        "trees": [
            {"nodes": {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "counts": t.counts.tolist(),
            }}
            for t in model.trees
        ],
    }


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, separators=(",", ":"))
        fh.write("\n")


def model_from_dict(doc):
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(
            f"unsupported model version {doc.get('version')!r} (expected {MODEL_VERSION})")
    try:
        params = ForestParams(**doc["params"])
        class_count = int(doc["class_count"])
        feature_dim = int(doc["feature_dim"])
        trees = []
        for t in doc["trees"]:
            nodes = t["nodes"]
            tree = DecisionTree(
                np.asarray(nodes["feature"], dtype=np.int64),
                np.asarray(nodes["threshold"], dtype=np.float64),
                np.asarray(nodes["left"], dtype=np.int64),
                np.asarray(nodes["right"], dtype=np.int64),
                np.asarray(nodes["counts"], dtype=np.int64).reshape(-1, class_count),
            )
            _check_tree(tree, feature_dim, class_count)
            trees.append(tree)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model: {exc}") from exc
    if not trees:
        raise ModelFormatError("model has no trees")
    return ForestModel(tuple(trees), class_count, feature_dim, params)


def _check_tree(tree, feature_dim, class_count):
    n = tree.n_nodes
    arrays = (tree.feature, tree.threshold, tree.left, tree.right)
    if n == 0 or any(a.shape != (n,) for a in arrays) or tree.counts.shape != (n, class_count):
        raise ModelFormatError("tree node arrays have inconsistent lengths")
    internal = tree.feature >= 0
    if np.any(tree.feature >= feature_dim):
        raise ModelFormatError("tree references a feature index out of range")
    kids = np.concatenate([tree.left[internal], tree.right[internal]])
    # every non-root node must be the child of exactly one earlier node
    if np.any(kids <= 0) or np.any(kids >= n) or len(np.unique(kids)) != n - 1:
        raise ModelFormatError("tree child indices do not form a binary tree")
    parents = np.concatenate([np.flatnonzero(internal)] * 2)
    if np.any(kids <= parents):
        raise ModelFormatError("tree child indices must follow their parent")
    if np.any(tree.left[~internal] != -1) or np.any(tree.right[~internal] != -1):
        raise ModelFormatError("leaf nodes must not have children")
    if np.any(tree.counts < 0) or np.any(tree.counts[~internal].sum(axis=1) == 0):
        raise ModelFormatError("leaf class histograms must be non-negative and non-empty")


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"cannot parse model file {path}: {exc}") from exc
    return model_from_dict(doc)


class SoftRandomForestClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn compatible front end for :func:`fit_forest`.

    ``predict_proba`` returns ensemble probabilities (mean of per-tree leaf
    distributions); ``predict`` is their argmax with ties going to the
    lowest class. With ``n_classes`` set, labels must be ids ``0..n_classes-1``
    and every class gets a probability column even if absent from ``y``.
    """

    def __init__(self, n_estimators=100, max_depth=None, min_samples_leaf=1,
                 max_features="sqrt", random_state=0, n_classes=None, n_jobs=None):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.random_state = random_state
        self.n_classes = n_classes
        self.n_jobs = n_jobs

    def _params(self, n_features):
        if self.max_features == "sqrt":
            mtry = None
        elif self.max_features is None:
            mtry = n_features
        else:
            mtry = int(self.max_features)
        return ForestParams(
            n_trees=self.n_estimators, max_depth=self.max_depth,
            min_leaf=self.min_samples_leaf, mtry=mtry, seed=int(self.random_state))

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if self.n_classes is None:
            self.classes_, y_enc = np.unique(y, return_inverse=True)
        else:
            self.classes_ = np.arange(self.n_classes)
            y_enc = np.asarray(y, dtype=np.int64)
            if y_enc.min() < 0 or y_enc.max() >= self.n_classes or np.any(y_enc != y):
                raise ValidationError(f"labels must be integer ids in 0..{self.n_classes - 1}")
        self.n_features_in_ = X.shape[1]
        self.model_ = fit_forest(
            X, y_enc, len(self.classes_), self._params(X.shape[1]), n_jobs=self.n_jobs)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return self.model_.predict_proba(X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    @property
    def estimators_(self):
        check_is_fitted(self, "model_")
        return self.model_.trees
