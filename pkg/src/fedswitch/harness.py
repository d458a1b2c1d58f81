"""Experiment harness: config resolution, sweeps, metric files, summaries.

A config file describes one problem plus a run-parameter block and an
optional sweep (lists of alpha, E, participation, algorithm). Every
(sweep point, seed) pair produces one line-delimited metrics file: a
header record with the fully resolved configuration followed by one
record per round. A summary per sweep point aggregates final values
across seeds. Files carry no timestamps, so reruns are byte-identical.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from itertools import product
from pathlib import Path
from typing import Any, Iterable

import numpy as np

import fedswitch
from fedswitch.datasets import (CsvSchema, iid_partition, load_csv,
                                split_train_test, standardize)
from fedswitch.errors import ConfigurationError, SchemaVersionError
from fedswitch.models import make_model
from fedswitch.optimizer import RunConfig, RunResult, run
from fedswitch.problems import (OracleSet, build_fair_oracles,
                                build_np_oracles, make_synthetic)

METRICS_SCHEMA = "fedswitch-metrics/1"
SUMMARY_SCHEMA = "fedswitch-summary/1"

_SWEEP_AXES = ("algorithm", "alpha", "E", "participation")

_RUN_DEFAULTS: dict[str, Any] = {
    "algorithm": "switching",
    "K": 100,
    "E": 1,
    "participation": 1.0,
    "m": None,
    "eta": 0.1,
    "baseline_eta": None,
    "gamma": None,
    "epsilon": 0.1,
    "switch_divisor": 2.0,
    "alpha": 1.0,
    "B_zeta": 32,
    "B_g": 32,
    "projection_radius": None,
    "rho": 0.0,
    "lambda0": 0.0,
    "eta_d": 0.01,
}


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    run: dict[str, Any]
    sweep: dict[str, list]
    seeds: tuple[int, ...]
    out: str
    dataset: dict[str, Any]
    model: dict[str, Any]
    synthetic: dict[str, Any]

    def sweep_points(self) -> list[dict[str, Any]]:
        """Cross product of the sweep axes, in pinned axis order."""
        axes = [(k, self.sweep[k]) for k in _SWEEP_AXES if k in self.sweep]
        if not axes:
            return [{}]
        points = []
        for combo in product(*(vals for _, vals in axes)):
            points.append({k: v for (k, _), v in zip(axes, combo)})
        return points


def parse_config(raw: dict[str, Any], overrides: Iterable[str] = ()) -> ExperimentConfig:
    """Validate a raw config tree (plus key=value overrides) into an
    ExperimentConfig."""
    raw = json.loads(json.dumps(raw))  # deep copy, reject non-JSON values
    for ov in overrides:
        if "=" not in ov:
            raise ConfigurationError(f"override {ov!r} is not of the form key=value")
        key, _, val = ov.partition("=")
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override path {key!r} crosses a leaf")
        try:
            node[parts[-1]] = json.loads(val)
        except json.JSONDecodeError:
            node[parts[-1]] = val

    problem = raw.get("problem")
    if problem not in ("np", "fair", "synthetic"):
        raise ConfigurationError(
            f"problem must be one of np/fair/synthetic, got {problem!r}")
    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigurationError("seeds must be a nonempty list")
    run_block = dict(_RUN_DEFAULTS)
    for key, val in (raw.get("run") or {}).items():
        if key not in _RUN_DEFAULTS:
            raise ConfigurationError(f"unknown run parameter run.{key}")
        run_block[key] = val
    sweep = raw.get("sweep") or {}
    for key, vals in sweep.items():
        if key not in _SWEEP_AXES:
            raise ConfigurationError(
                f"sweep axis {key!r} not supported (use {', '.join(_SWEEP_AXES)})")
        if not isinstance(vals, list) or not vals:
            raise ConfigurationError(f"sweep.{key} must be a nonempty list")
    if problem in ("np", "fair") and not (raw.get("dataset") or {}).get("path"):
        raise ConfigurationError("dataset.path is required for np/fair problems")
    return ExperimentConfig(
        problem=problem,
        run=run_block,
        sweep=sweep,
        seeds=tuple(int(s) for s in seeds),
        out=str(raw.get("out", "results")),
        dataset=raw.get("dataset") or {},
        model=raw.get("model") or {},
        synthetic=raw.get("synthetic") or {},
    )


def load_config(path: str | Path, overrides: Iterable[str] = ()) -> ExperimentConfig:
    import yaml

    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} is not a mapping")
    return parse_config(raw, overrides)


def _build_problem(cfg: ExperimentConfig, seed: int, n_clients: int
                   ) -> tuple[OracleSet, dict[str, Any]]:
    """Construct the oracle set for one run; returns (oracles, problem info)."""
    if cfg.problem == "synthetic":
        sd = cfg.synthetic
        prob = make_synthetic(
            n=n_clients, d=int(sd.get("d", 6)),
            noise=float(sd.get("noise", 0.0)),
            slack=float(sd.get("slack", 0.5)),
            seed=int(sd.get("instance_seed", 0)),
            pool=int(sd.get("pool", 256)),
            radius=float(sd.get("radius", 2.0)))
        return prob.oracles, {"problem": "synthetic", "d": prob.oracles.dim,
                              "F_star": prob.F_star, "L": prob.L, "D": prob.D}

    ds = cfg.dataset
    if ds.get("preset") == "adult_like":
        from fedswitch.gensynth import adult_like_schema

        base = adult_like_schema()
        schema = CsvSchema(
            label=ds.get("label", base.label),
            categorical={k: list(v) for k, v in (ds.get("categorical")
                                                 or base.categorical).items()},
            protected=ds.get("protected", base.protected),
            protected_value=ds.get("protected_value", base.protected_value))
    elif ds.get("preset"):
        raise ConfigurationError(f"unknown dataset preset {ds['preset']!r}")
    else:
        schema = CsvSchema(
            label=ds.get("label", "label"),
            categorical={k: list(v) for k, v in (ds.get("categorical") or {}).items()},
            protected=ds.get("protected"),
            protected_value=ds.get("protected_value"))
    table = load_csv(ds["path"], schema, header=bool(ds.get("header", True)))
    # layout_seed pins one federated data layout across training seeds
    layout_seed = seed if ds.get("layout_seed") is None else int(ds["layout_seed"])
    train, test = split_train_test(
        table, 1.0 - float(ds.get("test_fraction", 0.2)), run_seed=layout_seed)
    if bool(ds.get("standardize", True)):
        if cfg.problem == "fair":
            numeric = [j for j, name in enumerate(train.feature_names)
                       if "=" not in name]
            train, test, _ = standardize(train, test, numeric)
        else:
            train, test, _ = standardize(train, test)
    stratify = ds.get("stratify", "class" if cfg.problem == "np" else "class_protected")
    clients = iid_partition(train, n_clients, run_seed=layout_seed, stratify=stratify)

    if cfg.problem == "np":
        oracles = build_np_oracles(clients)
        return oracles, {"problem": "np", "d": oracles.dim,
                         "train_rows": train.features.shape[0],
                         "test_rows": test.features.shape[0]}
    model = make_model(cfg.model.get("kind", "mlp"),
                       input_dim=train.features.shape[1],
                       hidden=int(cfg.model.get("hidden", 64)))
    oracles = build_fair_oracles(clients, model)
    return oracles, {"problem": "fair", "d": oracles.dim,
                     "model": model.kind, "hidden": getattr(model, "hidden", None),
                     "train_rows": train.features.shape[0],
                     "test_rows": test.features.shape[0]}


def resolve_run_config(cfg: ExperimentConfig, point: dict[str, Any],
                       seed: int, n_clients: int) -> RunConfig:
    rb = {**cfg.run, **point}
    if rb.get("m") is not None and "participation" not in point:
        m = int(rb["m"])
    else:
        m = max(1, round(float(rb["participation"]) * n_clients))
    E = int(rb["E"])
    eta = float(rb["eta"])
    if rb["algorithm"] != "switching" and rb["baseline_eta"] is not None:
        eta = float(rb["baseline_eta"])
    gamma = rb["gamma"]
    if gamma is None:
        gamma = eta / E
    return RunConfig(
        K=int(rb["K"]), E=E, n=n_clients, m=m,
        eta=eta, gamma=float(gamma),
        epsilon=float(rb["epsilon"]), alpha=float(rb["alpha"]),
        B_zeta=int(rb["B_zeta"]), B_g=int(rb["B_g"]), run_seed=seed,
        algorithm=str(rb["algorithm"]),
        switch_divisor=float(rb["switch_divisor"]),
        rho=float(rb["rho"]), lambda0=float(rb["lambda0"]),
        eta_d=float(rb["eta_d"]),
        projection_radius=(None if rb["projection_radius"] is None
                           else float(rb["projection_radius"])))


def n_clients_of(cfg: ExperimentConfig) -> int:
    if cfg.problem == "synthetic":
        return int(cfg.synthetic.get("n", 8))
    return int(cfg.dataset.get("clients", 10))


def point_label(point: dict[str, Any]) -> str:
    if not point:
        return "run"
    return "__".join(f"{k}={point[k]}" for k in _SWEEP_AXES if k in point)


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def execute_run(cfg: ExperimentConfig, point: dict[str, Any], seed: int
                ) -> tuple[RunConfig, RunResult, OracleSet, dict[str, Any]]:
    n_clients = n_clients_of(cfg)
    oracles, info = _build_problem(cfg, seed, n_clients)
    rc = resolve_run_config(cfg, point, seed, n_clients)
    result = run(rc, oracles)
    return rc, result, oracles, info


def _metrics_text(rc: RunConfig, result: RunResult, info: dict[str, Any],
                  point: dict[str, Any], seed: int) -> str:
    header = {
        "schema": METRICS_SCHEMA,
        "artifact_version": fedswitch.__version__,
        "seed": seed,
        "sweep_point": point,
        "config": asdict(rc),
        "problem": info,
    }
    lines = [_dumps(header)]
    lines.extend(_dumps(rec.to_json_dict()) for rec in result.history)
    return "\n".join(lines) + "\n"


def run_and_write(cfg: ExperimentConfig, point: dict[str, Any], seed: int,
                  out_dir: Path) -> dict[str, Any]:
    """Run one (sweep point, seed) pair, write its metrics file, and
    return the per-seed summary entries."""
    rc, result, oracles, info = execute_run(cfg, point, seed)
    pdir = out_dir / point_label(point)
    pdir.mkdir(parents=True, exist_ok=True)
    path = pdir / f"metrics_seed{seed}.jsonl"
    _atomic_write(path, _metrics_text(rc, result, info, point, seed))

    last = result.history[-1] if result.history else None
    return {
        "seed": seed,
        "file": path.name,
        "final_round": None if last is None else {
            "F_exact": last.F_exact, "G_exact": last.G_exact,
            "grad_evals": last.grad_evals},
        "kappa": result.kappa,
        "violation_rounds": sum(1 for r in result.history
                                if r.G_exact > rc.epsilon),
        "output": {
            "F_exact": oracles.exact_F(result.w_bar),
            "G_exact": oracles.exact_G(result.w_bar),
            "empty_S": result.empty_S,
            "averaged": result.averaged,
        },
    }


def _mean_std(values: list[float]) -> dict[str, float]:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std()),
            "var": float(arr.var())}


def _summarize_point(cfg: ExperimentConfig, point: dict[str, Any],
                     entries: list[dict[str, Any]]) -> dict[str, Any]:
    entries = sorted(entries, key=lambda e: e["seed"])
    finals = {
        "F_exact": _mean_std([e["final_round"]["F_exact"] for e in entries]),
        "G_exact": _mean_std([e["final_round"]["G_exact"] for e in entries]),
        "kappa": _mean_std([e["kappa"] for e in entries]),
        "violation_rounds": _mean_std([e["violation_rounds"] for e in entries]),
        "grad_evals": _mean_std([float(e["final_round"]["grad_evals"])
                                 for e in entries]),
    }
    return {
        "schema": SUMMARY_SCHEMA,
        "artifact_version": fedswitch.__version__,
        "sweep_point": point,
        "epsilon": float({**cfg.run, **point}.get("epsilon", cfg.run["epsilon"])),
        "seeds": [e["seed"] for e in entries],
        "per_seed": entries,
        "final": finals,
    }


def _one_task(args):
    cfg, point, seed, out_dir = args
    return point_label(point), run_and_write(cfg, point, seed, Path(out_dir))


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                   seeds: Iterable[int] | None = None,
                   parallel: int = 0) -> list[Path]:
    """Execute the full sweep; returns the written summary paths."""
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = tuple(seeds) if seeds is not None else cfg.seeds
    points = cfg.sweep_points()
    tasks = [(cfg, point, seed, str(out)) for point in points for seed in seeds]
    results: dict[str, list[dict[str, Any]]] = {point_label(p): [] for p in points}
    if parallel and parallel > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            for label, entry in pool.map(_one_task, tasks):
                results[label].append(entry)
    else:
        for task in tasks:
            label, entry = _one_task(task)
            results[label].append(entry)

    written = []
    for point in points:
        label = point_label(point)
        summary = _summarize_point(cfg, point, results[label])
        path = out / label / "summary.json"
        _atomic_write(path, _dumps(summary) + "\n")
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# Reading metric files back (summarize subcommand, plot toolkits)
# ---------------------------------------------------------------------------

def read_metrics(path: str | Path) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """Parse one metrics file into (header, round records)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise SchemaVersionError(f"{path}: empty metrics file")
    header = json.loads(lines[0])
    if header.get("schema") != METRICS_SCHEMA:
        raise SchemaVersionError(
            f"{path}: unsupported schema {header.get('schema')!r} "
            f"(expected {METRICS_SCHEMA})")
    return header, [json.loads(ln) for ln in lines[1:]]


def summarize(paths: Iterable[str | Path]) -> dict[str, Any]:
    """Aggregate metric files into per-sweep-point final-round statistics."""
    paths = [Path(p) for p in paths]
    if not paths:
        raise ValueError("no metric files given")
    groups: dict[str, dict[str, Any]] = {}
    for path in sorted(paths):
        header, records = read_metrics(path)
        if not records:
            raise ValueError(f"{path}: no round records")
        label = point_label(header.get("sweep_point") or {})
        group = groups.setdefault(label, {
            "sweep_point": header.get("sweep_point") or {},
            "epsilon": header["config"]["epsilon"],
            "entries": []})
        last = records[-1]
        K = len(records)
        in_S = sum(1 for r in records if r["indicator"] and not r.get("degenerate"))
        group["entries"].append({
            "seed": header["seed"],
            "file": str(path),
            "F_exact": last["F_exact"],
            "G_exact": last["G_exact"],
            "kappa": in_S / K,
            "violation_rounds": sum(1 for r in records
                                    if r["G_exact"] > header["config"]["epsilon"]),
            "grad_evals": last["grad_evals"],
        })
    out = {"schema": SUMMARY_SCHEMA, "points": {}}
    for label, group in sorted(groups.items()):
        entries = sorted(group["entries"], key=lambda e: e["seed"])
        out["points"][label] = {
            "sweep_point": group["sweep_point"],
            "epsilon": group["epsilon"],
            "seeds": [e["seed"] for e in entries],
            "final": {
                key: _mean_std([float(e[key]) for e in entries])
                for key in ("F_exact", "G_exact", "kappa", "violation_rounds",
                            "grad_evals")},
            "per_seed": entries,
        }
    return out


def summary_table(summary: dict[str, Any]) -> str:
    """Human-readable table for the summarize subcommand."""
    rows = [f"{'point':<40} {'F_exact':>18} {'G_exact':>18} "
            f"{'kappa':>14} {'grad evals':>12}"]
    for label, pt in summary["points"].items():
        fin = pt["final"]
        rows.append(
            f"{label:<40} "
            f"{fin['F_exact']['mean']:>9.4f} ±{fin['F_exact']['std']:<7.4f} "
            f"{fin['G_exact']['mean']:>9.4f} ±{fin['G_exact']['std']:<7.4f} "
            f"{fin['kappa']['mean']:>6.3f} ±{fin['kappa']['std']:<6.3f} "
            f"{fin['grad_evals']['mean']:>12.0f}")
    return "\n".join(rows)
