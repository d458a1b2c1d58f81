"""Read and validate fedswitch metric and summary files.

This package talks to the optimizer only through these files; the
schemas are the contract (one JSON header line followed by one JSON
record per round; a summary.json per sweep-point directory).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from glob import glob
from pathlib import Path

METRICS_SCHEMA = "fedswitch-metrics/1"
SUMMARY_SCHEMA = "fedswitch-summary/1"

_HEADER_FIELDS = ("schema", "seed", "sweep_point", "config")
_RECORD_FIELDS = ("k", "G_hat", "indicator", "F_exact", "G_exact",
                  "grad_evals")


class SchemaError(ValueError):
    """A metrics or summary file does not match the documented schema."""


class CrossCheckError(ValueError):
    """Plotted finals disagree with the summarized finals."""


@dataclass(frozen=True)
class RunData:
    path: Path
    header: dict
    records: list[dict]
    summary_path: Path

    @property
    def seed(self) -> int:
        return self.header["seed"]

    @property
    def sweep_point(self) -> dict:
        return self.header["sweep_point"]

    @property
    def epsilon(self) -> float:
        return float(self.header["config"]["epsilon"])


def read_metrics(path: str | Path) -> RunData:
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines()
             if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty metrics file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: header is not JSON: {exc}") from exc
    if header.get("schema") != METRICS_SCHEMA:
        raise SchemaError(f"{path}: schema {header.get('schema')!r} "
                          f"(expected {METRICS_SCHEMA})")
    for field in _HEADER_FIELDS:
        if field not in header:
            raise SchemaError(f"{path}: header missing field {field!r}")
    if "epsilon" not in header["config"]:
        raise SchemaError(f"{path}: header missing field 'config.epsilon'")
    records = [json.loads(ln) for ln in lines[1:]]
    if not records:
        raise SchemaError(f"{path}: no round records")
    for rec in records:
        for field in _RECORD_FIELDS:
            if field not in rec:
                raise SchemaError(
                    f"{path}: record k={rec.get('k')} missing field {field!r}")
    return RunData(path=path, header=header, records=records,
                   summary_path=path.parent / "summary.json")


def collect(patterns: list[str], base: str | Path = ".") -> list[RunData]:
    base = Path(base)
    paths: list[Path] = []
    for pattern in patterns:
        p = Path(pattern)
        hits = sorted(glob(str(p if p.is_absolute() else base / pattern),
                           recursive=True))
        paths.extend(Path(h) for h in hits)
    if not paths:
        raise FileNotFoundError(f"no metric files match {patterns!r}")
    return [read_metrics(p) for p in sorted(set(paths))]


def read_summary(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: summary file missing (run the "
                          f"experiment harness to produce it)")
    summary = json.loads(path.read_text(encoding="utf-8"))
    if summary.get("schema") != SUMMARY_SCHEMA:
        raise SchemaError(f"{path}: schema {summary.get('schema')!r} "
                          f"(expected {SUMMARY_SCHEMA})")
    return summary


def cross_check_finals(runs: list[RunData], tol: float = 1e-12) -> float:
    """Verify each run's final-round values against its summary file.

    Returns the largest absolute difference seen; raises CrossCheckError
    when any plotted final deviates beyond ``tol``.
    """
    worst = 0.0
    for run in runs:
        summary = read_summary(run.summary_path)
        entry = next((e for e in summary.get("per_seed", [])
                      if e.get("seed") == run.seed), None)
        if entry is None or "final_round" not in (entry or {}):
            raise CrossCheckError(
                f"{run.summary_path}: no final_round entry for seed {run.seed}")
        last = run.records[-1]
        for field in ("F_exact", "G_exact"):
            diff = abs(float(last[field]) - float(entry["final_round"][field]))
            worst = max(worst, diff)
            if diff > tol:
                raise CrossCheckError(
                    f"{run.path}: final {field} {last[field]!r} differs from "
                    f"summary value {entry['final_round'][field]!r} by {diff}")
    return worst
