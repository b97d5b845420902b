"""Tests for report artifacts: tables, delimited output, and figures."""

import csv

import pytest

from flowdfa.evaluation import ExperimentResult, RocCurve
from flowdfa.report import (
    render_auc_bars,
    render_roc_figure,
    summary_table,
    write_report,
    write_results_csv,
    write_roc_points,
)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@pytest.fixture()
def result():
    rows = []
    curves = {}
    for m in ("state_frequency", "markov"):
        for c in ("clean", "padding"):
            for r in (0, 1):
                rows.append(
                    {"model": m, "condition": c, "run": r, "auc": 0.5 + r * 0.25}
                )
            curves[(m, c)] = RocCurve(
                points=((0.0, 0.0), (0.25, 0.75), (1.0, 1.0)), auc=0.75
            )
    return ExperimentResult(rows=rows, curves=curves)


class TestDelimitedOutput:
    def test_results_csv_round_trips(self, result, tmp_path):
        path = tmp_path / "results.csv"
        write_results_csv(result, path)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["model", "condition", "run", "auc"]
        assert len(rows) == 1 + len(result.rows)
        parsed = [
            {"model": m, "condition": c, "run": int(r), "auc": float(a)}
            for m, c, r, a in rows[1:]
        ]
        assert parsed == result.rows

    def test_results_csv_is_deterministic(self, result, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_results_csv(result, a)
        write_results_csv(result, b)
        assert a.read_bytes() == b.read_bytes()

    def test_roc_points_files(self, result, tmp_path):
        paths = write_roc_points(result, tmp_path)
        assert len(paths) == 4
        for path in paths:
            lines = path.read_text(encoding="utf-8").splitlines()
            assert lines[0] == "fpr\ttpr"
            pts = [tuple(float(x) for x in line.split("\t")) for line in lines[1:]]
            assert pts[0] == (0.0, 0.0)
            assert pts[-1] == (1.0, 1.0)


class TestSummaryTable:
    def test_mentions_models_and_means(self, result):
        text = summary_table(result)
        assert "mean AUC" in text
        assert "state_frequency" in text
        assert "markov" in text
        # both runs average to 0.625 in every cell
        assert "0.625" in text


class TestFigures:
    def test_roc_figure_is_a_png(self, result, tmp_path):
        path = tmp_path / "roc.png"
        render_roc_figure(result, path)
        assert path.read_bytes()[:8] == PNG_MAGIC

    def test_auc_bars_is_a_png(self, result, tmp_path):
        path = tmp_path / "bars.png"
        render_auc_bars(result, path)
        assert path.read_bytes()[:8] == PNG_MAGIC


class TestWriteReport:
    def test_writes_every_artifact(self, result, tmp_path):
        paths = write_report(result, tmp_path / "out")
        assert set(paths) == {
            "results",
            "summary",
            "roc_figure",
            "auc_figure",
            "roc_state_frequency_clean",
            "roc_state_frequency_padding",
            "roc_markov_clean",
            "roc_markov_padding",
        }
        for path in paths.values():
            assert path.exists() and path.stat().st_size > 0
        assert paths["roc_figure"].read_bytes()[:8] == PNG_MAGIC
        assert paths["auc_figure"].read_bytes()[:8] == PNG_MAGIC
