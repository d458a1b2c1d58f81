"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 runtime error. The
FEDSWITCH_OUT environment variable, when set, overrides --out.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from fedswitch import gensynth, harness
from fedswitch.errors import (ConfigurationError, CsvParseError,
                              SchemaVersionError)

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(config, overrides):
    try:
        return harness.load_config(config, overrides)
    except (ConfigurationError, CsvParseError) as exc:
        _fail(EXIT_CONFIG, f"{config}: {exc}")
    except Exception as exc:  # yaml errors, missing file
        _fail(EXIT_CONFIG, f"{config}: {exc}")


def _out_dir(out):
    env = os.environ.get("FEDSWITCH_OUT")
    return env if env else out


@click.group()
def main():
    """Federated switching-gradient experiment harness."""


@main.command("run")
@click.option("--config", required=True, type=click.Path(exists=False),
              help="YAML experiment config.")
@click.option("--out", default=None, help="Output directory (default from config).")
@click.option("--seeds", default=None,
              help="Comma-separated seed list overriding the config.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config key (dotted path), repeatable.")
@click.option("--parallel", default=0, type=int,
              help="Run up to N (sweep point, seed) pairs in parallel.")
def run_cmd(config, out, seeds, overrides, parallel):
    """Execute an experiment sweep and write metrics + summaries."""
    cfg = _load(config, overrides)
    seed_list = None
    if seeds:
        try:
            seed_list = [int(s) for s in seeds.split(",") if s.strip()]
        except ValueError:
            _fail(EXIT_CONFIG, f"invalid --seeds value {seeds!r}")
        if not seed_list:
            _fail(EXIT_CONFIG, "empty --seeds list")
    points = cfg.sweep_points()
    total = len(points) * len(seed_list if seed_list is not None else cfg.seeds)
    click.echo(f"sweep: {len(points)} point(s) x "
               f"{len(seed_list if seed_list is not None else cfg.seeds)} seed(s) "
               f"= {total} run(s)")
    try:
        summaries = harness.run_experiment(
            cfg, out_dir=_out_dir(out), seeds=seed_list, parallel=parallel)
    except (ConfigurationError, CsvParseError) as exc:
        _fail(EXIT_CONFIG, str(exc))
    except Exception as exc:
        _fail(EXIT_RUNTIME, str(exc))
    for path in summaries:
        click.echo(f"wrote {path}")


@main.command("summarize")
@click.argument("files", nargs=-1, type=click.Path())
@click.option("--json", "json_out", default=None, type=click.Path(),
              help="Also write the structured summary to this path.")
def summarize_cmd(files, json_out):
    """Summarize metric files: final-round values, mean +- std across seeds."""
    paths = []
    for pattern in files:
        p = Path(pattern)
        if p.is_dir():
            paths.extend(sorted(p.rglob("metrics_seed*.jsonl")))
        elif p.exists():
            paths.append(p)
        else:
            _fail(EXIT_CONFIG, f"no such file: {pattern}")
    if not paths:
        _fail(EXIT_CONFIG, "no metric files given")
    try:
        summary = harness.summarize(paths)
    except SchemaVersionError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except Exception as exc:
        _fail(EXIT_RUNTIME, str(exc))
    click.echo(harness.summary_table(summary))
    if json_out:
        Path(json_out).write_text(
            json.dumps(summary, sort_keys=True, indent=2) + "\n",
            encoding="utf-8")
        click.echo(f"wrote {json_out}")


@main.command("validate-config")
@click.option("--config", required=True, type=click.Path(exists=False))
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
def validate_cmd(config, overrides):
    """Parse and validate a config; print the resolved sweep."""
    cfg = _load(config, overrides)
    points = cfg.sweep_points()
    n = harness.n_clients_of(cfg)
    try:
        for point in points:
            for seed in cfg.seeds:
                harness.resolve_run_config(cfg, point, seed, n)
    except Exception as exc:
        _fail(EXIT_CONFIG, f"{config}: {exc}")
    click.echo(f"ok: problem={cfg.problem} clients={n} "
               f"points={len(points)} seeds={list(cfg.seeds)}")
    for point in points:
        click.echo(f"  {harness.point_label(point)}")


@main.command("gen-synth")
@click.option("--kind", type=click.Choice(["adult-like", "cancer-like"]),
              required=True)
@click.option("--rows", default=4000, type=int)
@click.option("--seed", default=7, type=int)
@click.option("--out", required=True, type=click.Path())
def gen_synth_cmd(kind, rows, seed, out):
    """Write a synthetic CSV dataset."""
    try:
        path = gensynth.generate(kind, rows, seed, _out_dir(out))
    except ValueError as exc:
        _fail(EXIT_CONFIG, str(exc))
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
