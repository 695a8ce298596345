import os
import re
import subprocess
import sys
from pathlib import Path

import pytest

DOCS = Path(__file__).resolve().parent.parent / "docs"
FENCE = re.compile(r"^```bash\n(.*?)^```", re.S | re.M)


def _blocks(name):
    return FENCE.findall((DOCS / name).read_text())


def test_walkthrough_has_commands():
    blocks = _blocks("walkthrough.md")
    assert len(blocks) >= 5
    joined = "\n".join(blocks)
    for command in ("synth", "segment", "features", "train", "predict", "score", "render",
                    "hist", "pipeline", "verify-bundle"):
        assert f"ecoserv {command}" in joined


@pytest.mark.slow
def test_walkthrough_runs(tmp_path):
    script = "set -euo pipefail\n" + "\n".join(_blocks("walkthrough.md"))
    env = dict(os.environ, PATH=os.path.dirname(sys.executable) + os.pathsep + os.environ["PATH"])
    proc = subprocess.run(["bash", "-c", script], cwd=tmp_path, env=env,
                          capture_output=True, text=True, timeout=600)
    assert proc.returncode == 0, proc.stdout[-2000:] + proc.stderr[-2000:]
    assert "artifacts identical" in proc.stdout
    assert (tmp_path / "work" / "gw_soft.png").exists()
