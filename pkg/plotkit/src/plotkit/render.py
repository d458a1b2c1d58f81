"""Deterministic matplotlib rendering.

Figures carry no timestamps or random identifiers, so rendering the
same inputs twice produces byte-identical PNG and SVG files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from plotkit.figure import FigureSpec, RenderReport, Series, prepare

_RC = {
    "figure.dpi": 150,
    "savefig.dpi": 150,
    "svg.hashsalt": "plotkit",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
}


def _draw_series(ax, series: Series, panel: str, shading: str, color):
    y = series.values[panel]
    mean = y.mean(axis=0)
    ax.plot(series.x, mean, label=series.label, color=color)
    if y.shape[0] > 1:
        if shading == "std":
            lo, hi = mean - y.std(axis=0), mean + y.std(axis=0)
        else:
            lo, hi = y.min(axis=0), y.max(axis=0)
        ax.fill_between(series.x, lo, hi, alpha=0.2, color=color, linewidth=0)


def render(spec: FigureSpec, out_dir: str | Path, base: str | Path = "."
           ) -> RenderReport:
    """Render one figure spec to <out_dir>/<out_name>.png and .svg."""
    series, tolerance, n_runs, max_diff = prepare(spec, base=base)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with plt.rc_context(_RC):
        fig, axes = plt.subplots(
            len(spec.panels), 1, sharex=True,
            figsize=(6.4, 2.6 * len(spec.panels)), constrained_layout=True)
        axes = np.atleast_1d(axes)
        colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
        for ax, panel in zip(axes, spec.panels):
            for i, s in enumerate(series):
                _draw_series(ax, s, panel, spec.shading,
                             colors[i % len(colors)])
            if panel in spec.tolerance_panels:
                ax.axhline(tolerance, color="red", linestyle="--",
                           linewidth=1.0, label="tolerance")
            ax.set_ylabel("worst-case objective" if panel == "objective"
                          else "worst-case constraint")
        axes[-1].set_xlabel("cumulative gradient evaluations")
        axes[0].legend(loc="upper right", fontsize=8)
        if spec.title:
            fig.suptitle(spec.title)

        png = out_dir / f"{spec.out_name}.png"
        svg = out_dir / f"{spec.out_name}.svg"
        fig.savefig(png, format="png")
        fig.savefig(svg, format="svg", metadata={"Date": None})
        plt.close(fig)

    return RenderReport(
        files=(str(png), str(svg)),
        panels=tuple(spec.panels),
        series_labels=tuple(s.label for s in series),
        seeds_per_series={s.label: s.seeds for s in series},
        shading=spec.shading,
        tolerance=tolerance,
        tolerance_panels=tuple(spec.tolerance_panels),
        finals_checked=n_runs,
        max_final_diff=max_diff,
    )
