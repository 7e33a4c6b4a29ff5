import json
import subprocess
import sys

import pytest

from consmax.cli import main


def run_cli(args):
    return main(list(args))


@pytest.fixture(scope="module")
def iso_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("iso")
    code = run_cli(
        [
            "synth", "--kind", "isometric-grid", "--n", "64",
            "--outlier-ratio", "0.4", "--seed", "5", "--out-dir", str(d),
        ]
    )
    assert code == 0
    return d


@pytest.fixture(scope="module")
def tpl_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("tpl")
    code = run_cli(
        [
            "synth", "--kind", "template-bend", "--n", "49",
            "--outlier-ratio", "0.2", "--seed", "5", "--out-dir", str(d),
        ]
    )
    assert code == 0
    return d


class TestMatchShapes:
    def test_exact_run(self, iso_dir, tmp_path):
        report_path = tmp_path / "report.json"
        trace_path = tmp_path / "trace.csv"
        code = run_cli(
            [
                "match-shapes",
                "--source", str(iso_dir / "source.obj"),
                "--target", str(iso_dir / "target.obj"),
                "--matches", str(iso_dir / "matches.txt"),
                "--mode", "exact",
                "--report-out", str(report_path),
                "--trace-out", str(trace_path),
            ]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["solver"]["optimal"] is True
        assert report["solver"]["objective"] == 26  # round(0.4 * 64)
        assert report["eval"]["precision"] == 1.0
        assert report["eval"]["recall"] == 1.0
        assert report["solver"]["wall_time"] is None
        assert trace_path.read_text().startswith("iteration,upper,lower,open_nodes")

    def test_relaxed_run(self, iso_dir, tmp_path):
        report_path = tmp_path / "relaxed.json"
        code = run_cli(
            [
                "match-shapes",
                "--source", str(iso_dir / "source.obj"),
                "--target", str(iso_dir / "target.obj"),
                "--matches", str(iso_dir / "matches.txt"),
                "--mode", "relaxed",
                "--report-out", str(report_path),
            ]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["solver"]["mode"] == "relaxed"

    def test_malformed_matches_exit_2(self, iso_dir, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("not a count\n")
        code = run_cli(
            [
                "match-shapes",
                "--source", str(iso_dir / "source.obj"),
                "--target", str(iso_dir / "target.obj"),
                "--matches", str(bad),
            ]
        )
        assert code == 2

    def test_byte_identical_reports(self, iso_dir, tmp_path):
        paths = [tmp_path / "a.json", tmp_path / "b.json"]
        for p in paths:
            code = run_cli(
                [
                    "match-shapes",
                    "--source", str(iso_dir / "source.obj"),
                    "--target", str(iso_dir / "target.obj"),
                    "--matches", str(iso_dir / "matches.txt"),
                    "--seed", "3",
                    "--report-out", str(p),
                ]
            )
            assert code == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_timing_flag_breaks_nothing(self, iso_dir, tmp_path):
        p = tmp_path / "timed.json"
        code = run_cli(
            [
                "match-shapes",
                "--source", str(iso_dir / "source.obj"),
                "--target", str(iso_dir / "target.obj"),
                "--matches", str(iso_dir / "matches.txt"),
                "--timing",
                "--report-out", str(p),
            ]
        )
        assert code == 0
        assert json.loads(p.read_text())["solver"]["wall_time"] > 0


class TestMatchTemplate:
    def test_exact_run(self, tpl_dir, tmp_path):
        report_path = tmp_path / "report.json"
        code = run_cli(
            [
                "match-template",
                "--template", str(tpl_dir / "template.obj"),
                "--image-points", str(tpl_dir / "image_points.txt"),
                "--intrinsics", str(tpl_dir / "intrinsics.json"),
                "--matches", str(tpl_dir / "matches.txt"),
                "--mode", "exact",
                "--edge-cap", "100",
                "--time-budget", "15",
                "--report-out", str(report_path),
            ]
        )
        report = json.loads(report_path.read_text())
        assert code in (0, 3)  # 3 when the budget ran out without certificate
        assert report["eval"]["recall"] >= 0.9

    def test_local_filter_run(self, tpl_dir, tmp_path):
        report_path = tmp_path / "lf.json"
        code = run_cli(
            [
                "match-template",
                "--template", str(tpl_dir / "template.obj"),
                "--image-points", str(tpl_dir / "image_points.txt"),
                "--intrinsics", str(tpl_dir / "intrinsics.json"),
                "--matches", str(tpl_dir / "matches.txt"),
                "--mode", "local-filter",
                "--report-out", str(report_path),
            ]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["solver"]["mode"] == "local-filter"

    def test_bad_intrinsics_exit_2(self, tpl_dir, tmp_path):
        bad = tmp_path / "K.json"
        bad.write_text("{\"fx\": 1.0}")
        code = run_cli(
            [
                "match-template",
                "--template", str(tpl_dir / "template.obj"),
                "--image-points", str(tpl_dir / "image_points.txt"),
                "--intrinsics", str(bad),
                "--matches", str(tpl_dir / "matches.txt"),
            ]
        )
        assert code == 2


class TestBench:
    def test_small_sweep(self, tmp_path):
        out = tmp_path / "bench"
        code = run_cli(
            [
                "bench", "--n", "36", "--ratios", "0.2,0.5", "--seeds", "1",
                "--modes", "exact", "--out-dir", str(out),
            ]
        )
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["rows"]) == 2
        assert all(row["optimal"] for row in summary["rows"])


class TestEntryPoint:
    def test_console_script_help(self):
        proc = subprocess.run(
            [sys.executable, "-m", "consmax.cli", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "match-shapes" in proc.stdout
