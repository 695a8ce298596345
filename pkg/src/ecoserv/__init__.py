"""Ecosystem-service score maps from superpixel soft classification."""

from .features import FeatureMatrix, SuperpixelFeatures, extract_features
from .forest import (
    ForestModel, ForestParams, SoftRandomForestClassifier, load_model, predict_hard,
    predict_proba, save_model, train)
from .raster_io import Raster, read_raster, render_grayscale, write_raster
from .scoring import (
    ScoreMap, SupplyMatrix, SupplyMatrixScorer, histogram, pixel_baseline_map,
    read_matrix_csv, sample_scores, score, score_map)
from .snic import SegmentationMap, SNICSegmenter, SnicParams, seed_grid, segment
from .synth import SceneSpec, generate
from .training_set import LabelPoint, TrainingSet, build_training_set

__version__ = "0.1.0"

__all__ = [
    "FeatureMatrix", "ForestModel", "ForestParams", "LabelPoint", "Raster", "SNICSegmenter",
    "SceneSpec", "ScoreMap", "SegmentationMap", "SnicParams", "SoftRandomForestClassifier",
    "SupplyMatrix", "SupplyMatrixScorer", "SuperpixelFeatures", "TrainingSet",
    "build_training_set", "extract_features", "generate", "histogram", "load_model",
    "pixel_baseline_map", "predict_hard", "predict_proba", "read_matrix_csv", "read_raster",
    "render_grayscale", "sample_scores", "save_model", "score", "score_map", "seed_grid",
    "segment", "train", "write_raster",
]
