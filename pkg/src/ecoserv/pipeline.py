"""File-based pipeline stages and the declarative run configuration.

Every stage reads its inputs from disk and writes its artifacts to an
output directory, so any stage can be rerun on its own. Stage functions
return a summary dict (counts, timings, config hash); timings live only
in summaries, never in artifacts, so artifacts are byte-reproducible.
"""

import csv
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ._validation import ValidationError, check_positive_float, check_positive_int
from .features import FeatureMatrix, extract_features
from .forest import ForestParams, load_model, save_model, train
from .raster_io import read_raster, render_grayscale, write_raster
from .scoring import (
    extreme_mass, histogram, interior_occupancy, pixel_baseline_map, read_matrix_csv,
    render_histograms, sample_scores, score_map_from_proba, shannon_entropy,
    write_histogram_csv)
from .snic import DEFAULT_COMPACTNESS, SnicParams, segment
from .synth import SceneSpec, generate, truth_raster
from .training_set import (
    build_training_set, read_classes_csv, read_points_csv, write_classes_csv, write_points_csv)

ALL_MODES = ("soft", "hard", "pixel")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(doc):
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _summary(stage, params, counts, started, artifacts):
    return {
        "stage": stage,
        "config_hash": config_hash(params),
        "counts": counts,
        "timings": {"seconds": round(time.perf_counter() - started, 4)},
        "artifacts": sorted(os.path.basename(a) for a in artifacts),
    }


def _require(*paths):
    for p in paths:
        probe = p + ".json" if p and p.endswith(".ecr") else p
        if not probe or not os.path.exists(probe):
            raise FileNotFoundError(f"missing input: {p}")


def _label_map(path):
    raster = read_raster(path)
    if raster.bands != 1:
        raise ValidationError(f"{path}: label raster must have one band")
    return raster.data[0]


# -- stages -------------------------------------------------------------------


def stage_synth(spec_path, out_dir):
    started = time.perf_counter()
    _require(spec_path)
    spec = SceneSpec.from_json(spec_path)
    os.makedirs(out_dir, exist_ok=True)
    raster, labels, points = generate(spec)
    paths = {
        "scene": os.path.join(out_dir, "scene.ecr"),
        "truth": os.path.join(out_dir, "truth.ecr"),
        "points": os.path.join(out_dir, "points.csv"),
        "classes": os.path.join(out_dir, "classes.csv"),
    }
    write_raster(raster, paths["scene"])
    write_raster(truth_raster(labels), paths["truth"])
    write_points_csv(points, paths["points"])
    write_classes_csv(spec.classes, paths["classes"])
    counts = {"width": spec.width, "height": spec.height, "bands": spec.bands,
              "points": len(points), "classes": len(spec.classes)}
    return _summary("synth", {"spec": asdict(spec)}, counts, started, paths.values())


def stage_segment(raster_path, out_dir, k, compactness=DEFAULT_COMPACTNESS):
    started = time.perf_counter()
    _require(raster_path)
    raster = read_raster(raster_path)
    seg = segment(raster, SnicParams(k, compactness))
    os.makedirs(out_dir, exist_ok=True)
    labels_path = os.path.join(out_dir, "labels.ecr")
    segments_path = os.path.join(out_dir, "segments.csv")
    write_raster(seg.to_raster(), labels_path)
    seg.write_segments_csv(segments_path)
    counts = {"k": k, "k_actual": seg.n_segments, "pixels": raster.width * raster.height,
              "queue_pops": seg.pops}
    return _summary("segment", {"k": k, "compactness": compactness}, counts, started,
                    [labels_path, segments_path])


def stage_features(raster_path, labels_path, out_dir):
    started = time.perf_counter()
    _require(raster_path, labels_path)
    raster = read_raster(raster_path)
    fm = extract_features(raster, _label_map(labels_path))
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "features.csv")
    fm.to_csv(path)
    counts = {"segments": fm.n_segments, "features": fm.values.shape[1]}
    return _summary("features", {}, counts, started, [path])


def stage_train(features_path, labels_path, points_path, classes_path, out_dir,
                params, n_jobs=None):
    started = time.perf_counter()
    _require(features_path, labels_path, points_path, classes_path)
    fm = FeatureMatrix.from_csv(features_path)
    class_names = read_classes_csv(classes_path)
    data = build_training_set(fm, _label_map(labels_path), read_points_csv(points_path),
                              class_names)
    model = train(data, params, n_jobs=n_jobs)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "model.json")
    save_model(model, path)
    counts = {"rows": len(data), "dropped_points": data.n_dropped,
              "classes": data.class_count, "trees": len(model.trees),
              "nodes": int(sum(t.n_nodes for t in model.trees))}
    return _summary("train", {"forest": asdict(params)}, counts, started, [path])


def write_proba_csv(proba, class_names, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["seg_id", *class_names, "hard_class"])
        hard = np.argmax(proba, axis=1)
        for i, (row, h) in enumerate(zip(proba, hard)):
            writer.writerow([i, *(repr(float(p)) for p in row), int(h)])


def read_proba_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "seg_id" or header[-1] != "hard_class":
            raise ValidationError(f"{path}: expected seg_id,<classes...>,hard_class header")
        rows = [[float(v) for v in r[1:-1]] for r in reader]
    return np.array(rows).reshape(len(rows), len(header) - 2), tuple(header[1:-1])


def stage_predict(model_path, features_path, classes_path, out_dir):
    started = time.perf_counter()
    _require(model_path, features_path, classes_path)
    model = load_model(model_path)
    class_names = read_classes_csv(classes_path)
    if len(class_names) != model.class_count:
        raise ValidationError("classes.csv does not match the model's class count")
    proba = model.predict_proba(FeatureMatrix.from_csv(features_path).values)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "proba.csv")
    write_proba_csv(proba, class_names, path)
    hard = np.bincount(np.argmax(proba, axis=1), minlength=model.class_count)
    counts = {"segments": len(proba), "hard_class_counts": hard.tolist(),
              "mean_max_probability": round(float(proba.max(axis=1).mean()), 6)}
    return _summary("predict", {}, counts, started, [path])


def stage_score(matrix_path, out_dir, mode, proba_path=None, labels_path=None, truth_path=None):
    """Write ``scores_<mode>.ecr`` with one band per service."""
    started = time.perf_counter()
    _require(matrix_path)
    matrix = read_matrix_csv(matrix_path)
    if mode == "pixel":
        _require(truth_path)
        smap = pixel_baseline_map(_label_map(truth_path), matrix)
    elif mode in ("soft", "hard"):
        _require(proba_path, labels_path)
        proba, class_names = read_proba_csv(proba_path)
        matrix.check_classes(class_names)
        smap = score_map_from_proba(proba, _label_map(labels_path), matrix, mode)
    else:
        raise ValidationError(f"mode must be one of {ALL_MODES}, got {mode!r}")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"scores_{mode}.ecr")
    write_raster(smap.to_raster(), path)
    counts = {
        s: {"min": float(smap.pixel_scores[i].min()), "max": float(smap.pixel_scores[i].max()),
            "distinct": int(np.unique(smap.pixel_scores[i]).size)}
        for i, s in enumerate(smap.services)
    }
    return _summary("score", {"mode": mode}, counts, started, [path])


def _service_band(raster, service):
    names = raster.band_names or ()
    if service is None:
        if raster.bands != 1:
            raise ValidationError("raster has several bands; choose a service")
        return raster.data[0]
    if service not in names:
        raise ValidationError(f"service {service!r} not in raster bands {names}")
    return raster.data[names.index(service)]


def stage_render(scores_path, service, lo, hi, out_path):
    started = time.perf_counter()
    _require(scores_path)
    values = _service_band(read_raster(scores_path), service)
    render_grayscale(values, lo, hi, out_path)
    return _summary("render", {"service": service, "lo": lo, "hi": hi},
                    {"pixels": int(values.size)}, started, [out_path])


def stage_hist(score_paths, service, out_dir, n_samples=3000, bins=21, lo=0.0, hi=2.0,
               seed=0, region=None):
    """Sample each labelled score map and compare the binned distributions.

    ``score_paths`` maps a label (e.g. the mode) to a score raster.
    """
    started = time.perf_counter()
    _require(*score_paths.values())
    os.makedirs(out_dir, exist_ok=True)
    hists, stats, artifacts = {}, {}, []
    for label, path in score_paths.items():
        values = _service_band(read_raster(path), service)
        samples = sample_scores(values, n_samples, seed, region)
        edges, counts = histogram(samples, bins, lo, hi)
        csv_path = os.path.join(out_dir, f"hist_{service}_{label}.csv")
        write_histogram_csv(edges, counts, csv_path)
        artifacts.append(csv_path)
        hists[label] = (edges, counts)
        stats[label] = {
            "entropy_bits": shannon_entropy(counts),
            "extreme_mass": extreme_mass(counts),
            "interior_bins": interior_occupancy(counts),
            "distinct_samples": int(np.unique(samples).size),
            "in_range": int(counts.sum()),
        }
    png_path = os.path.join(out_dir, f"hist_{service}.png")
    render_histograms(hists, png_path, title=service.replace("_", " "), xlabel="score")
    stats_path = os.path.join(out_dir, f"hist_{service}.json")
    with open(stats_path, "w") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifacts += [png_path, stats_path]
    params = {"service": service, "n": n_samples, "bins": bins, "lo": lo, "hi": hi,
              "seed": seed, "region": list(region) if region is not None else None}
    return _summary("hist", params, stats, started, artifacts)


# -- run configuration --------------------------------------------------------


@dataclass
class HistogramConfig:
    service: str = "groundwater_recharge"
    n_samples: int = 3000
    bins: int = 21
    seed: int = 0
    region: object = "training_region"
    lo: float = None
    hi: float = None


@dataclass
class RunConfig:
    matrix: str
    scene_spec: str = None
    raster: str = None
    points: str = None
    classes: str = None
    truth: str = None
    k: int = 5000
    compactness: float = DEFAULT_COMPACTNESS
    forest: dict = field(default_factory=lambda: asdict(ForestParams(seed=42)))
    services: list = None
    modes: list = field(default_factory=lambda: list(ALL_MODES))
    histogram: HistogramConfig = field(default_factory=HistogramConfig)
    output_dir: str = "out"
    base_dir: str = field(default=".", repr=False)

    @classmethod
    def from_dict(cls, doc, base_dir="."):
        if not isinstance(doc, dict):
            raise ValidationError("run config must be a JSON object")
        names = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(doc) - names
        if unknown:
            raise ValidationError(f"run config: unknown field(s) {sorted(unknown)}")
        if "matrix" not in doc:
            raise ValidationError("run config: 'matrix' is required")
        doc = dict(doc)
        hist = doc.pop("histogram", {}) or {}
        bad = set(hist) - {f.name for f in fields(HistogramConfig)}
        if bad:
            raise ValidationError(f"run config histogram: unknown field(s) {sorted(bad)}")
        cfg = cls(**doc, histogram=HistogramConfig(**hist), base_dir=base_dir)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))

    def to_dict(self):
        doc = asdict(self)
        doc.pop("base_dir")
        return doc

    def resolve(self, path):
        if path is None:
            return None
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def validate(self):
        check_positive_int(self.k, "k")
        check_positive_float(self.compactness, "compactness")
        ForestParams(**self.forest)
        if self.scene_spec is None and (self.raster is None or self.points is None
                                        or self.classes is None):
            raise ValidationError("run config needs scene_spec, or raster + points + classes")
        bad_modes = set(self.modes) - set(ALL_MODES)
        if bad_modes or not self.modes:
            raise ValidationError(f"modes must be a non-empty subset of {ALL_MODES}")
        if "pixel" in self.modes and self.scene_spec is None and self.truth is None:
            raise ValidationError("pixel mode needs a truth label raster")
        check_positive_int(self.histogram.n_samples, "histogram.n_samples")
        check_positive_int(self.histogram.bins, "histogram.bins")


def run_pipeline(cfg, out_dir=None, n_jobs=None):
    """Run every stage; return ``(manifest, summaries)``.

    Input paths in the config are relative to the config file; the output
    directory is relative to the working directory, so the packaged config
    never writes into the package.
    """
    out = out_dir or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    summaries = []
    inputs = {"matrix": cfg.resolve(cfg.matrix)}
    spec = None
    if cfg.scene_spec is not None:
        inputs["scene_spec"] = cfg.resolve(cfg.scene_spec)
        summaries.append(stage_synth(inputs["scene_spec"], out))
        spec = SceneSpec.from_json(inputs["scene_spec"])
        raster_path = os.path.join(out, "scene.ecr")
        points_path = os.path.join(out, "points.csv")
        classes_path = os.path.join(out, "classes.csv")
        truth_path = os.path.join(out, "truth.ecr")
    else:
        raster_path, points_path = cfg.resolve(cfg.raster), cfg.resolve(cfg.points)
        classes_path, truth_path = cfg.resolve(cfg.classes), cfg.resolve(cfg.truth)
        inputs.update(raster=raster_path, points=points_path, classes=classes_path)
        if truth_path:
            inputs["truth"] = truth_path
    _require(*inputs.values())

    matrix = read_matrix_csv(inputs["matrix"])
    matrix.check_classes(read_classes_csv(classes_path))
    services = cfg.services or list(matrix.services)
    for s in services:
        matrix.row(s)

    summaries.append(stage_segment(raster_path, out, cfg.k, cfg.compactness))
    labels_path = os.path.join(out, "labels.ecr")
    summaries.append(stage_features(raster_path, labels_path, out))
    features_path = os.path.join(out, "features.csv")
    summaries.append(stage_train(features_path, labels_path, points_path, classes_path, out,
                                 ForestParams(**cfg.forest), n_jobs=n_jobs))
    summaries.append(stage_predict(os.path.join(out, "model.json"), features_path,
                                   classes_path, out))
    score_paths = {}
    for mode in cfg.modes:
        summaries.append(stage_score(inputs["matrix"], out, mode,
                                     proba_path=os.path.join(out, "proba.csv"),
                                     labels_path=labels_path, truth_path=truth_path))
        score_paths[mode] = os.path.join(out, f"scores_{mode}.ecr")
        for s in services:
            lo, hi = matrix.weight_range(s)
            if lo == hi:
                hi = lo + 1
            summaries.append(stage_render(score_paths[mode], s, lo, hi,
                                          os.path.join(out, f"{s}_{mode}.png")))

    h = cfg.histogram
    region = h.region
    if region == "training_region":
        region = spec.training_region if spec is not None else None
    elif region is not None:
        region = tuple(region)
    lo = h.lo if h.lo is not None else matrix.weight_range(h.service)[0]
    hi = h.hi if h.hi is not None else matrix.weight_range(h.service)[1]
    summaries.append(stage_hist(score_paths, h.service, out, h.n_samples, h.bins, lo, hi,
                                h.seed, region))

    artifacts = sorted(
        name for name in os.listdir(out)
        if os.path.isfile(os.path.join(out, name)) and name != "manifest.json"
        and not name.startswith("summary"))
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg.to_dict()),
        "inputs": {k: sha256_file(v) for k, v in sorted(inputs.items())},
        "artifacts": {name: sha256_file(os.path.join(out, name)) for name in artifacts},
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summaries, fh, indent=2)
        fh.write("\n")
    return manifest, summaries
