import json
import os
import subprocess
import sys
import time

import pytest

from ecoserv.bundle import default_bundle_dir
from ecoserv.synth import SceneSpec, generate

SMALL_SCENE = {
    "width": 64,
    "height": 64,
    "bands": 3,
    "classes": ["urban", "forest", "water"],
    "mixing_zone_width": 6,
    "n_points": 600,
    "seed": 11,
    "regions": [
        {"shape": "rectangle", "class_id": 1, "bbox": [0, 0, 64, 64],
         "mean": [0.2, 0.6, 0.3], "sigma": [0.03, 0.05, 0.03]},
        {"shape": "disk", "class_id": 0, "center": [20, 22], "radius": 13,
         "mean": [0.7, 0.4, 0.6], "sigma": [0.05, 0.05, 0.05]},
        {"shape": "rectangle", "class_id": 2, "bbox": [38, 34, 60, 58],
         "mean": [0.05, 0.1, 0.5], "sigma": [0.02, 0.02, 0.04]},
    ],
}

SMALL_MATRIX = "service,urban,forest,water\nbiodiversity,0,5,3\ngroundwater_recharge,0,2,1\n"


def run_cli(*args, cwd=None):
    """Run ``python -m ecoserv.cli`` and return the CompletedProcess."""
    return subprocess.run(
        [sys.executable, "-m", "ecoserv.cli", *map(str, args)],
        capture_output=True, text=True, cwd=cwd)


@pytest.fixture(scope="session")
def bundle_dir():
    return default_bundle_dir()


@pytest.fixture(scope="session")
def reference_spec(bundle_dir):
    return SceneSpec.from_json(os.path.join(bundle_dir, "scene.json"))


@pytest.fixture(scope="session")
def reference_scene(reference_spec):
    return generate(reference_spec)


@pytest.fixture
def small_spec_path(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(SMALL_SCENE))
    return path


@pytest.fixture
def small_config(tmp_path, small_spec_path):
    """Run config for the small scene; returns its path."""
    (tmp_path / "matrix.csv").write_text(SMALL_MATRIX)
    cfg = {
        "scene_spec": "scene.json",
        "matrix": "matrix.csv",
        "k": 120,
        "forest": {"n_trees": 12, "seed": 3},
        "histogram": {"service": "groundwater_recharge", "n_samples": 500, "bins": 11,
                      "seed": 1},
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="session")
def reference_runs(tmp_path_factory, bundle_dir):
    """Two full pipeline runs of the packaged config: 1 thread, then 4 threads."""
    runs = []
    for threads in (1, 4):
        out = tmp_path_factory.mktemp(f"reference_t{threads}")
        started = time.perf_counter()
        proc = run_cli("--threads", threads, "pipeline",
                       "--config", os.path.join(bundle_dir, "run.json"), "--out", out)
        elapsed = time.perf_counter() - started
        assert proc.returncode == 0, proc.stderr
        with open(out / "manifest.json") as fh:
            manifest = json.load(fh)
        runs.append({"out": out, "seconds": elapsed, "threads": threads,
                     "manifest": manifest})
    return runs


# -- acceptance summary -------------------------------------------------------


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(report, "user_properties", ()))
            if "criterion" not in props or report.when not in ("call", "setup"):
                continue
            if report.when == "setup" and report.passed:
                continue
            status = "PASS" if report.passed else "FAIL"
            lines.append((props["criterion"], status, props.get("detail", "")))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, status, detail in sorted(lines):
        terminalreporter.write_line(f"{status} {criterion}" + (f" | {detail}" if detail else ""))
