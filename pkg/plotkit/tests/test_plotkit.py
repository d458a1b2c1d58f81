import json
import re
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from plotkit.cli import main
from plotkit.figure import (FigureSpec, assemble_series, load_spec, prepare,
                            resolve_tolerance)
from plotkit.reader import (CrossCheckError, SchemaError, collect,
                            cross_check_finals, read_metrics)
from plotkit.render import render

from conftest import write_run_dir


def spec_for(root, **kw):
    base = dict(inputs=[str(root / "**" / "metrics_seed*.jsonl")],
                series_by="algorithm")
    base.update(kw)
    return FigureSpec(**base)


class TestReader:
    def test_reads_runs(self, fixture_sweep):
        runs = collect([str(fixture_sweep / "**" / "metrics_seed*.jsonl")])
        assert len(runs) == 4
        assert {r.sweep_point["algorithm"] for r in runs} == {"switching",
                                                              "penalty"}

    def test_bad_schema_names_file(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text('{"schema": "bogus/1"}\n{"k": 0}\n', encoding="utf-8")
        with pytest.raises(SchemaError, match="m.jsonl"):
            read_metrics(p)

    def test_missing_record_field_named(self, fixture_sweep):
        path = fixture_sweep / "algorithm=switching" / "metrics_seed0.jsonl"
        lines = path.read_text().splitlines()
        rec = json.loads(lines[1])
        del rec["G_exact"]
        lines[1] = json.dumps(rec)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(SchemaError, match="G_exact"):
            read_metrics(path)

    def test_missing_inputs(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            collect([str(tmp_path / "nothing*.jsonl")])

    def test_cross_check_passes_on_consistent_files(self, fixture_sweep):
        runs = collect([str(fixture_sweep / "**" / "metrics_seed*.jsonl")])
        assert cross_check_finals(runs) == 0.0

    def test_cross_check_detects_tampering(self, fixture_sweep):
        spath = fixture_sweep / "algorithm=penalty" / "summary.json"
        summary = json.loads(spath.read_text())
        summary["per_seed"][0]["final_round"]["F_exact"] += 1e-6
        spath.write_text(json.dumps(summary), encoding="utf-8")
        runs = collect([str(fixture_sweep / "**" / "metrics_seed*.jsonl")])
        with pytest.raises(CrossCheckError, match="F_exact"):
            cross_check_finals(runs)

    def test_missing_summary_reported(self, fixture_sweep):
        (fixture_sweep / "algorithm=penalty" / "summary.json").unlink()
        runs = collect([str(fixture_sweep / "**" / "metrics_seed*.jsonl")])
        with pytest.raises(SchemaError, match="summary"):
            cross_check_finals(runs)


class TestSeries:
    def test_grouping_and_labels(self, fixture_sweep):
        runs = collect([str(fixture_sweep / "**" / "metrics_seed*.jsonl")])
        series = assemble_series(runs, spec_for(fixture_sweep))
        assert [s.label for s in series] == ["algorithm=penalty",
                                             "algorithm=switching"]
        for s in series:
            assert s.seeds == (0, 1)
            assert s.values["objective"].shape == (2, 6)
            assert np.array_equal(s.x, 64 * np.arange(1, 7))

    def test_missing_series_key_names_it(self, fixture_sweep):
        runs = collect([str(fixture_sweep / "**" / "metrics_seed*.jsonl")])
        with pytest.raises(SchemaError, match="'alpha'"):
            assemble_series(runs, spec_for(fixture_sweep, series_by="alpha"))

    def test_single_series_without_key(self, tmp_path):
        root = tmp_path / "m"
        write_run_dir(root, {}, seeds=[0])
        runs = collect([str(root / "**" / "metrics_seed*.jsonl")])
        series = assemble_series(runs, spec_for(root, series_by=None))
        assert [s.label for s in series] == ["run"]

    def test_mismatched_x_axis_rejected(self, tmp_path):
        root = tmp_path / "m"
        write_run_dir(root, {"algorithm": "a"}, seeds=[0], K=6)
        write_run_dir(root, {"algorithm": "a"}, seeds=[1], K=4)
        # merge seed-1 file into the same directory
        src = root / "algorithm=a"
        runs = collect([str(src / "metrics_seed*.jsonl")])
        with pytest.raises(SchemaError, match="x-axis"):
            assemble_series(runs, spec_for(root))

    def test_envelope_encloses_every_curve(self, tmp_path):
        root = tmp_path / "m"
        write_run_dir(root, {"algorithm": "a"}, seeds=[0, 1, 2, 3, 4])
        runs = collect([str(root / "**" / "metrics_seed*.jsonl")])
        (s,) = assemble_series(runs, spec_for(root))
        y = s.values["constraint"]
        lo, hi = y.min(axis=0), y.max(axis=0)
        assert ((y >= lo) & (y <= hi)).all()


class TestTolerance:
    def test_from_headers(self, fixture_sweep):
        runs = collect([str(fixture_sweep / "**" / "metrics_seed*.jsonl")])
        assert resolve_tolerance(runs, spec_for(fixture_sweep)) == 0.1

    def test_explicit_override(self, fixture_sweep):
        runs = collect([str(fixture_sweep / "**" / "metrics_seed*.jsonl")])
        assert resolve_tolerance(runs,
                                 spec_for(fixture_sweep, tolerance=0.25)) == 0.25

    def test_conflicting_headers_rejected(self, tmp_path):
        root = tmp_path / "m"
        write_run_dir(root, {"algorithm": "a"}, seeds=[0], epsilon=0.1)
        write_run_dir(root, {"algorithm": "b"}, seeds=[0], epsilon=0.2)
        runs = collect([str(root / "**" / "metrics_seed*.jsonl")])
        with pytest.raises(SchemaError, match="tolerances"):
            resolve_tolerance(runs, spec_for(root))


class TestSpec:
    def test_load_spec_yaml(self, tmp_path):
        p = tmp_path / "fig.yaml"
        p.write_text("inputs: ['a/*.jsonl']\nseries_by: alpha\n"
                     "shading: envelope\nout_name: np\n", encoding="utf-8")
        spec = load_spec(p)
        assert spec.series_by == "alpha"
        assert spec.shading == "envelope"

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "fig.yaml"
        p.write_text("inputs: ['a/*.jsonl']\nbogus: 1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="bogus"):
            load_spec(p)

    def test_validation(self):
        with pytest.raises(ValueError):
            FigureSpec(inputs=[])
        with pytest.raises(ValueError):
            FigureSpec(inputs=["x"], panels=("loss",))
        with pytest.raises(ValueError):
            FigureSpec(inputs=["x"], shading="rainbow")
        with pytest.raises(ValueError):
            FigureSpec(inputs=["x"], x="rounds")


class TestRender:
    def test_writes_png_and_svg(self, fixture_sweep, tmp_path):
        report = render(spec_for(fixture_sweep, out_name="fig"), tmp_path / "out")
        png, svg = map(Path, report.files)
        assert png.suffix == ".png" and png.exists() and png.stat().st_size > 0
        assert svg.suffix == ".svg" and svg.exists()
        assert report.panels == ("objective", "constraint")
        assert report.series_labels == ("algorithm=penalty",
                                        "algorithm=switching")
        assert report.max_final_diff == 0.0

    def test_byte_identical_reruns(self, fixture_sweep, tmp_path):
        spec = spec_for(fixture_sweep, out_name="fig")
        r1 = render(spec, tmp_path / "a")
        r2 = render(spec, tmp_path / "b")
        for f1, f2 in zip(r1.files, r2.files):
            assert Path(f1).read_bytes() == Path(f2).read_bytes()

    def test_svg_layout_elements(self, fixture_sweep, tmp_path):
        report = render(spec_for(fixture_sweep, out_name="fig"), tmp_path)
        svg = Path(report.files[1]).read_text(encoding="utf-8")
        assert svg.count('<g id="axes_') == 2          # two panels
        assert "stroke-dasharray" in svg               # tolerance dashes
        assert len(re.findall(r'<g id="(?:FillBetween)?PolyCollection_', svg)) >= 4  # variance shading

    def test_single_run_no_shading(self, tmp_path):
        root = tmp_path / "m"
        write_run_dir(root, {"algorithm": "solo"}, seeds=[7])
        report = render(spec_for(root, out_name="solo"), tmp_path / "out")
        svg = Path(report.files[1]).read_text(encoding="utf-8")
        assert not re.search(r'<g id="(?:FillBetween)?PolyCollection_', svg)
        assert report.seeds_per_series == {"algorithm=solo": (7,)}

    def test_cross_check_blocks_render(self, fixture_sweep, tmp_path):
        spath = fixture_sweep / "algorithm=switching" / "summary.json"
        summary = json.loads(spath.read_text())
        summary["per_seed"][1]["final_round"]["G_exact"] -= 1e-3
        spath.write_text(json.dumps(summary), encoding="utf-8")
        with pytest.raises(CrossCheckError):
            render(spec_for(fixture_sweep), tmp_path / "out")
        assert not (tmp_path / "out" / "figure.png").exists()


class TestCli:
    def test_render_command(self, fixture_sweep, tmp_path):
        specf = tmp_path / "fig.yaml"
        specf.write_text(
            f"inputs: ['{fixture_sweep}/**/metrics_seed*.jsonl']\n"
            "series_by: algorithm\nout_name: cli_fig\n", encoding="utf-8")
        res = CliRunner().invoke(main, ["render", "--spec", str(specf),
                                        "--out", str(tmp_path / "figs")])
        assert res.exit_code == 0, res.output
        assert (tmp_path / "figs" / "cli_fig.png").exists()
        assert (tmp_path / "figs" / "cli_fig.svg").exists()
        assert "finals checked on 4 run(s)" in res.output

    def test_shading_override(self, fixture_sweep, tmp_path):
        specf = tmp_path / "fig.yaml"
        specf.write_text(
            f"inputs: ['{fixture_sweep}/**/metrics_seed*.jsonl']\n"
            "series_by: algorithm\n", encoding="utf-8")
        res = CliRunner().invoke(main, ["render", "--spec", str(specf),
                                        "--out", str(tmp_path / "figs"),
                                        "--shading", "envelope"])
        assert res.exit_code == 0, res.output

    def test_bad_spec_exit_2(self, tmp_path):
        specf = tmp_path / "fig.yaml"
        specf.write_text("inputs: []\n", encoding="utf-8")
        res = CliRunner().invoke(main, ["render", "--spec", str(specf),
                                        "--out", str(tmp_path)])
        assert res.exit_code == 2

    def test_missing_series_exit_2(self, fixture_sweep, tmp_path):
        specf = tmp_path / "fig.yaml"
        specf.write_text(
            f"inputs: ['{fixture_sweep}/**/metrics_seed*.jsonl']\n"
            "series_by: alpha\n", encoding="utf-8")
        res = CliRunner().invoke(main, ["render", "--spec", str(specf),
                                        "--out", str(tmp_path)])
        assert res.exit_code == 2
        assert "alpha" in res.output
