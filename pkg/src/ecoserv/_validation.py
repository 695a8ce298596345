"""Input validation helpers shared by the estimators and the CLI."""

import numbers

import numpy as np


class ValidationError(ValueError):
    """Raised when user input violates a documented precondition."""


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive_float(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ValidationError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be finite and > 0, got {value}")
    return value


def check_range(lo, hi):
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ValidationError(f"lo must be < hi, got lo={lo}, hi={hi}")
    return lo, hi


def check_label_map(labels, shape=None):
    """Return ``labels`` as a C-contiguous int64 2-D array."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValidationError(f"label map must be 2-D, got shape {labels.shape}")
    if shape is not None and labels.shape != tuple(shape):
        raise ValidationError(
            f"label map shape {labels.shape} does not match raster {tuple(shape)}")
    if labels.dtype.kind == "f":
        if not np.all(np.isfinite(labels)) or np.any(labels != np.round(labels)):
            raise ValidationError("label map must hold integer ids")
    elif labels.dtype.kind not in "iu":
        raise ValidationError(f"label map has unsupported dtype {labels.dtype}")
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if labels.size and labels.min() < 0:
        raise ValidationError("label map ids must be non-negative")
    return labels


def check_probabilities(proba, n_classes=None, atol=1e-9):
    """Validate a (n, C) or (C,) array of probability vectors."""
    proba = np.asarray(proba, dtype=np.float64)
    if proba.ndim not in (1, 2):
        raise ValidationError(f"probabilities must be 1-D or 2-D, got {proba.ndim}-D")
    if n_classes is not None and proba.shape[-1] != n_classes:
        raise ValidationError(
            f"expected {n_classes} class probabilities, got {proba.shape[-1]}")
    if not np.all(np.isfinite(proba)) or np.any(proba < 0):
        raise ValidationError("probabilities must be finite and non-negative")
    sums = proba.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > atol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValidationError(f"probabilities must sum to 1 (max deviation {worst:.3g})")
    return proba
