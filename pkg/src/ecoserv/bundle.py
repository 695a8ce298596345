"""The checked-in reference bundle and its regeneration check.

The bundle holds the reference scene spec, the class vocabulary, the
sampled label points, an example supply matrix and a run config. Its
``bundle_manifest.json`` pins the hashes of everything the scene spec
regenerates plus a few invariants, so drift in the generator shows up
as a failed check.
"""

import hashlib
import json
import os
from dataclasses import dataclass
from importlib import resources

from .scoring import read_matrix_csv
from .synth import SceneSpec, generate
from .training_set import read_classes_csv, read_points_csv

MANIFEST = "bundle_manifest.json"


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def default_bundle_dir():
    return str(resources.files("ecoserv") / "data" / "reference")


def _sha(data):
    return hashlib.sha256(data).hexdigest()


def _points_bytes(points):
    lines = ["x,y,class_id"] + [f"{p.x},{p.y},{p.class_id}" for p in points]
    return ("\n".join(lines) + "\n").encode()


def _classes_bytes(class_names):
    lines = ["class_id,class_name"] + [f"{i},{n}" for i, n in enumerate(class_names)]
    return ("\n".join(lines) + "\n").encode()


def scene_hashes(spec):
    raster, labels, points = generate(spec)
    return {
        "scene": _sha(raster.data.astype("<f8").tobytes()),
        "truth": _sha(labels.astype("<i8").tobytes()),
        "points": _sha(_points_bytes(points)),
        "classes": _sha(_classes_bytes(spec.classes)),
    }


def build_manifest(bundle_dir=None):
    """Regenerate ``points.csv`` / ``classes.csv`` and rewrite the manifest."""
    bundle_dir = bundle_dir or default_bundle_dir()
    spec = SceneSpec.from_json(os.path.join(bundle_dir, "scene.json"))
    _, _, points = generate(spec)
    with open(os.path.join(bundle_dir, "points.csv"), "wb") as fh:
        fh.write(_points_bytes(points))
    with open(os.path.join(bundle_dir, "classes.csv"), "wb") as fh:
        fh.write(_classes_bytes(spec.classes))
    matrix = read_matrix_csv(os.path.join(bundle_dir, "example_matrix.csv"))
    manifest = {
        "seed": spec.seed,
        "hashes": scene_hashes(spec),
        "invariants": {
            "width": spec.width,
            "height": spec.height,
            "bands": spec.bands,
            "classes": len(spec.classes),
            "points": len(points),
            "services": list(matrix.services),
            "score_ranges": {s: list(matrix.weight_range(s)) for s in matrix.services},
        },
    }
    with open(os.path.join(bundle_dir, MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def verify_bundle(bundle_dir=None, seed=None):
    """Regenerate the reference scene and check it against the manifest.

    ``seed`` overrides the spec's seed (a perturbed seed must fail).
    Returns one :class:`CheckResult` per item.
    """
    bundle_dir = bundle_dir or default_bundle_dir()
    path = lambda name: os.path.join(bundle_dir, name)  # noqa: E731
    with open(path(MANIFEST)) as fh:
        manifest = json.load(fh)
    with open(path("scene.json")) as fh:
        doc = json.load(fh)
    if seed is not None:
        doc["seed"] = seed
    spec = SceneSpec.from_dict(doc)
    results = []

    hashes = scene_hashes(spec)
    for key, expected in manifest["hashes"].items():
        got = hashes.get(key)
        results.append(CheckResult(
            f"hash:{key}", got == expected,
            "" if got == expected else f"expected {expected[:12]}, regenerated {str(got)[:12]}"))

    with open(path("points.csv"), "rb") as fh:
        on_disk = _sha(fh.read())
    results.append(CheckResult(
        "file:points.csv", on_disk == manifest["hashes"]["points"],
        "" if on_disk == manifest["hashes"]["points"] else "checked-in points.csv differs"))

    inv = manifest["invariants"]
    points = read_points_csv(path("points.csv"))
    class_names = read_classes_csv(path("classes.csv"))
    matrix = read_matrix_csv(path("example_matrix.csv"))
    checks = [
        ("invariant:dimensions", (spec.width, spec.height, spec.bands)
         == (inv["width"], inv["height"], inv["bands"])),
        ("invariant:point_count", len(points) == inv["points"] == spec.n_points),
        ("invariant:class_count", len(class_names) == inv["classes"] == len(spec.classes)),
        ("invariant:matrix_columns", matrix.class_names == class_names),
        ("invariant:score_ranges", {s: list(matrix.weight_range(s)) for s in matrix.services}
         == inv["score_ranges"]),
        ("invariant:weights_in_0_5", bool(((matrix.weights >= 0) & (matrix.weights <= 5)).all())),
    ]
    results += [CheckResult(name, bool(ok), "" if ok else "mismatch") for name, ok in checks]
    return results
