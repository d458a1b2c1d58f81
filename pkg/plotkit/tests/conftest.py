import json
import math
from pathlib import Path

import pytest


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_run_dir(root: Path, point: dict, seeds, K=6, epsilon=0.1,
                  f_of=None, g_of=None) -> Path:
    """Materialize one sweep-point directory in the documented format."""
    f_of = f_of or (lambda seed, k: 1.0 / (k + 1) + 0.01 * seed)
    g_of = g_of or (lambda seed, k: 0.5 / (k + 1) - 0.02 * seed)
    label = "__".join(f"{k}={v}" for k, v in point.items()) or "run"
    pdir = root / label
    pdir.mkdir(parents=True, exist_ok=True)
    per_seed = []
    for seed in seeds:
        header = {"schema": "fedswitch-metrics/1", "artifact_version": "0.1.0",
                  "seed": seed, "sweep_point": point,
                  "config": {"epsilon": epsilon, "K": K}}
        lines = [_dumps(header)]
        last = None
        for k in range(K):
            rec = {"k": k, "mask": [0, 1], "G_hat": g_of(seed, k),
                   "G_batch_max": g_of(seed, k), "indicator": True,
                   "F_exact": f_of(seed, k), "G_exact": g_of(seed, k),
                   "grad_evals": (k + 1) * 64, "entropy": math.log(2),
                   "degenerate": False}
            lines.append(_dumps(rec))
            last = rec
        (pdir / f"metrics_seed{seed}.jsonl").write_text(
            "\n".join(lines) + "\n", encoding="utf-8")
        per_seed.append({
            "seed": seed, "file": f"metrics_seed{seed}.jsonl",
            "final_round": {"F_exact": last["F_exact"],
                            "G_exact": last["G_exact"],
                            "grad_evals": last["grad_evals"]},
            "kappa": 1.0, "violation_rounds": 0,
            "output": {"F_exact": last["F_exact"], "G_exact": last["G_exact"],
                       "empty_S": False, "averaged": True}})
    summary = {"schema": "fedswitch-summary/1", "artifact_version": "0.1.0",
               "sweep_point": point, "epsilon": epsilon,
               "seeds": list(seeds), "per_seed": per_seed,
               "final": {}}
    (pdir / "summary.json").write_text(_dumps(summary) + "\n", encoding="utf-8")
    return pdir


@pytest.fixture()
def fixture_sweep(tmp_path):
    """Two-algorithm sweep, two seeds each, in the documented file format."""
    root = tmp_path / "metrics"
    write_run_dir(root, {"algorithm": "switching"}, seeds=[0, 1])
    write_run_dir(root, {"algorithm": "penalty"}, seeds=[0, 1])
    return root
