"""Secondary acceptance: rendering a real NP sweep produced by the
experiment harness reproduces the two-panel layout with tolerance dashes
and variance shading, plotted finals match the summaries exactly, and
rendering is byte-for-byte repeatable.

The harness is driven through its command line only (the external
interface); nothing from the primary package is imported.
"""

import json
import re
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from plotkit.figure import FigureSpec
from plotkit.render import render

REPO = Path(__file__).resolve().parents[2]

NP_SWEEP_CONFIG = {
    "problem": "np",
    "dataset": {"path": str(REPO / "data" / "breast_cancer.csv"),
                "label": "label", "clients": 8, "test_fraction": 0.2,
                "standardize": True, "stratify": "class", "layout_seed": 0},
    "run": {"K": 40, "E": 2, "participation": 0.5, "eta": 0.5,
            "baseline_eta": 0.1, "epsilon": 0.1, "switch_divisor": 1.1,
            "alpha": 100.0, "B_zeta": 16, "B_g": 16, "rho": 2.5,
            "lambda0": 2.5, "eta_d": 0.01},
    "sweep": {"algorithm": ["switching", "penalty"]},
    "seeds": [0, 1, 2],
}


@pytest.fixture(scope="module")
def np_sweep_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("np_sweep")
    cfg_path = tmp / "np.yaml"
    cfg_path.write_text(yaml.safe_dump(NP_SWEEP_CONFIG), encoding="utf-8")
    out = tmp / "metrics"
    proc = subprocess.run(
        [sys.executable, "-m", "fedswitch.cli", "run",
         "--config", str(cfg_path), "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out


def test_np_sweep_figure_acceptance(np_sweep_dir, tmp_path):
    spec = FigureSpec(
        inputs=[str(np_sweep_dir / "**" / "metrics_seed*.jsonl")],
        series_by="algorithm", shading="std", out_name="np_main",
        title="NP classification")

    r1 = render(spec, tmp_path / "a")
    r2 = render(spec, tmp_path / "b")

    # layout: two stacked panels, tolerance dashes, variance shading
    assert r1.panels == ("objective", "constraint")
    svg = Path(r1.files[1]).read_text(encoding="utf-8")
    assert svg.count('<g id="axes_') == 2
    assert "stroke-dasharray" in svg
    assert len(re.findall(r'<g id="(?:FillBetween)?PolyCollection_', svg)) >= 4  # 2 series x 2 panels
    assert r1.series_labels == ("algorithm=penalty", "algorithm=switching")
    assert r1.tolerance == 0.1

    # plotted finals equal the summarize outputs: the cross-check ran on
    # every input and saw no deviation beyond 1e-12
    assert r1.finals_checked == 6
    assert r1.max_final_diff <= 1e-12

    # repeated rendering is byte-identical, PNG and SVG alike
    for f1, f2 in zip(r1.files, r2.files):
        assert Path(f1).read_bytes() == Path(f2).read_bytes()

    print("\nACCEPTANCE figure generation (layout, finals, determinism): PASS")


def test_envelope_mode_on_real_sweep(np_sweep_dir, tmp_path):
    spec = FigureSpec(
        inputs=[str(np_sweep_dir / "**" / "metrics_seed*.jsonl")],
        series_by="algorithm", shading="envelope", out_name="np_envelope")
    report = render(spec, tmp_path)
    assert report.shading == "envelope"
    assert Path(report.files[0]).exists()


def test_summarize_agrees_with_plotkit_finals(np_sweep_dir):
    # the primary's summarize subcommand reports the same final-round values
    # plotkit cross-checked against summary.json
    proc = subprocess.run(
        [sys.executable, "-m", "fedswitch.cli", "summarize", str(np_sweep_dir),
         "--json", str(np_sweep_dir / "s.json")],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    summary = json.loads((np_sweep_dir / "s.json").read_text())
    for label, point in summary["points"].items():
        pdir = np_sweep_dir / label
        written = json.loads((pdir / "summary.json").read_text())
        for fresh, stored in zip(point["per_seed"], written["per_seed"]):
            assert fresh["F_exact"] == stored["final_round"]["F_exact"]
            assert fresh["G_exact"] == stored["final_round"]["G_exact"]
