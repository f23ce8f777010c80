"""Cross-component integration: exported PFMs drive the primary package.

Covers the secondary acceptance criterion: depth maps written by this
tool load in the primary component with matching dimensions and full
[0, 1] range, and carry an end-to-end inhomogeneous haze attack over at
least 10 images (every record using file-based depth).
"""

import json
import subprocess
import sys

import pytest

from depthexport import DepthExportConfig, export_depth
from depthexport.pfm import read_pfm

hazeattack_imagecore = pytest.importorskip(
    "hazeattack.imagecore",
    reason="primary package must be installed for the integration test")


def _hazeattack(*args):
    proc = subprocess.run([sys.executable, "-m", "hazeattack", *args],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


@pytest.fixture(scope="module")
def rig(tmp_path_factory):
    root = tmp_path_factory.mktemp("integration")
    corpus = root / "corpus"
    weights = root / "ref.bin"
    _hazeattack("make-corpus", "--out", str(corpus), "--per-class", "12",
                "--size", "64", "--seed", "3")
    _hazeattack("train-ref", "--corpus-dir", str(corpus), "--out", str(weights),
                "--epochs", "25")
    return root, corpus, weights


def test_exports_load_in_primary_component(rig):
    root, corpus, _ = rig
    depth_dir = root / "depth"
    manifest = export_depth(DepthExportConfig(str(corpus), str(depth_dir)))
    assert len(manifest["entries"]) >= 10
    for entry in manifest["entries"][:20]:
        via_primary = hazeattack_imagecore.load_depth(depth_dir / entry["depth"])
        assert via_primary.shape == (64, 64)
        assert via_primary.min() == 0.0 and via_primary.max() == 1.0
        # and the primary reads exactly what this package wrote
        assert (via_primary == read_pfm(depth_dir / entry["depth"])).all()


def test_exports_drive_field_haze_attack_end_to_end(rig):
    root, corpus, weights = rig
    depth_dir = root / "depth-e2e"
    manifest = export_depth(DepthExportConfig(str(corpus), str(depth_dir)))
    assert manifest["failures"] == []
    run_dir = root / "run"
    _hazeattack("attack", "--corpus-dir", str(corpus),
                "--depth-dir", str(depth_dir), "--attack", "iadvhaze",
                "--weights", str(weights), "--out", str(run_dir),
                "--max-images", "15")
    records = [json.loads(line) for line in
               (run_dir / "results.jsonl").read_text().splitlines()]
    assert len(records) >= 10
    assert all(r["depth_source"] == "file" for r in records)
    assert all(r["iterations_run"] == 10 for r in records)
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["n_failures"] == 0
    assert summary["success_rate_overall"] > 0.0
