"""plotkit command line: render figure specs against metric files.

Exit codes: 0 success, 2 spec/schema error, 3 runtime error.
"""

from __future__ import annotations

import sys

import click

from plotkit.figure import load_spec
from plotkit.reader import CrossCheckError, SchemaError
from plotkit.render import render


@click.group()
def main():
    """Figure generation for fedswitch experiment outputs."""


@main.command("render")
@click.option("--spec", "spec_path", required=True, type=click.Path(),
              help="YAML figure specification.")
@click.option("--out", required=True, type=click.Path(),
              help="Output directory for PNG + SVG.")
@click.option("--shading", type=click.Choice(["std", "envelope"]),
              default=None, help="Override the spec's shading mode.")
def render_cmd(spec_path, out, shading):
    try:
        overrides = {"shading": shading} if shading else {}
        spec = load_spec(spec_path, **overrides)
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    try:
        report = render(spec, out)
    except (SchemaError, CrossCheckError, FileNotFoundError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except Exception as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    for path in report.files:
        click.echo(f"wrote {path}")
    click.echo(f"series: {', '.join(report.series_labels)}; "
               f"finals checked on {report.finals_checked} run(s), "
               f"max deviation {report.max_final_diff:.2e}")


if __name__ == "__main__":
    main()
