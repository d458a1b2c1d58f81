"""Figure specification and series assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from plotkit.reader import RunData, SchemaError, collect, cross_check_finals

PANEL_FIELDS = {"objective": "F_exact", "constraint": "G_exact"}
SHADINGS = ("std", "envelope")


@dataclass(frozen=True)
class FigureSpec:
    inputs: list[str]
    panels: tuple[str, ...] = ("objective", "constraint")
    x: str = "grad_evals"
    series_by: str | None = None
    shading: str = "std"
    tolerance: float | None = None           # default: epsilon from headers
    tolerance_panels: tuple[str, ...] = ("constraint",)
    title: str | None = None
    out_name: str = "figure"

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("spec needs at least one input glob")
        for p in tuple(self.panels) + tuple(self.tolerance_panels):
            if p not in PANEL_FIELDS:
                raise ValueError(f"unknown panel {p!r}")
        if self.x != "grad_evals":
            raise ValueError("only grad_evals is supported on the x-axis")
        if self.shading not in SHADINGS:
            raise ValueError(f"shading must be one of {SHADINGS}")


def load_spec(path: str | Path, **overrides) -> FigureSpec:
    import yaml

    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: figure spec must be a mapping")
    known = {"inputs", "panels", "x", "series_by", "shading", "tolerance",
             "tolerance_panels", "title", "out_name"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"{path}: unknown spec keys {sorted(unknown)}")
    raw.update(overrides)
    for key in ("panels", "tolerance_panels"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return FigureSpec(**raw)


@dataclass(frozen=True)
class Series:
    label: str
    x: np.ndarray                 # shared grad-evaluation axis
    values: dict[str, np.ndarray]  # panel -> (seeds, rounds) matrix
    seeds: tuple[int, ...]


@dataclass(frozen=True)
class RenderReport:
    files: tuple[str, ...]
    panels: tuple[str, ...]
    series_labels: tuple[str, ...]
    seeds_per_series: dict[str, tuple[int, ...]]
    shading: str
    tolerance: float
    tolerance_panels: tuple[str, ...]
    finals_checked: int
    max_final_diff: float


def _series_key(run: RunData, series_by: str | None):
    if series_by is None:
        return "run"
    if series_by not in run.sweep_point:
        raise SchemaError(
            f"{run.path}: series key {series_by!r} not present in "
            f"sweep_point {run.sweep_point!r}")
    return f"{series_by}={run.sweep_point[series_by]}"


def assemble_series(runs: list[RunData], spec: FigureSpec) -> list[Series]:
    groups: dict[str, list[RunData]] = {}
    for run in runs:
        groups.setdefault(_series_key(run, spec.series_by), []).append(run)
    out = []
    for label in sorted(groups):
        members = sorted(groups[label], key=lambda r: r.seed)
        x = np.array([rec[spec.x] for rec in members[0].records], dtype=float)
        for run in members[1:]:
            rx = np.array([rec[spec.x] for rec in run.records], dtype=float)
            if rx.shape != x.shape or not np.array_equal(rx, x):
                raise SchemaError(
                    f"{run.path}: x-axis ({spec.x}) differs from "
                    f"{members[0].path} within series {label!r}")
        values = {}
        for panel in spec.panels:
            key = PANEL_FIELDS[panel]
            values[panel] = np.array(
                [[rec[key] for rec in run.records] for run in members])
        out.append(Series(label=label, x=x, values=values,
                          seeds=tuple(r.seed for r in members)))
    return out


def resolve_tolerance(runs: list[RunData], spec: FigureSpec) -> float:
    if spec.tolerance is not None:
        return float(spec.tolerance)
    eps = {run.epsilon for run in runs}
    if len(eps) != 1:
        raise SchemaError(
            f"inputs carry different tolerances {sorted(eps)}; pin one with "
            f"the spec's tolerance field")
    return eps.pop()


def prepare(spec: FigureSpec, base: str | Path = ".") -> tuple[list[Series], float, int, float]:
    """Collect inputs, cross-check finals, and assemble plot series."""
    runs = collect(spec.inputs, base=base)
    max_diff = cross_check_finals(runs)
    series = assemble_series(runs, spec)
    tol = resolve_tolerance(runs, spec)
    return series, tol, len(runs), max_diff
