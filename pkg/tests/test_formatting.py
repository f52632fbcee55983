"""Tests for formatting.py - Pure functions for report rendering and metric files."""

import json

import pytest

from tactile_maps.formatting import (
    NA,
    ReportFormat,
    format_class_fractions,
    format_table_summary,
    format_value,
    parse_report,
    parse_value,
    read_metrics_jsonl,
    render_report,
    write_metrics_jsonl,
)
from tactile_maps.metrics import (
    DiffTable,
    MetricName,
    MetricsError,
    MetricTable,
    Statistic,
    diff_table,
)
from tactile_maps.palette import FEATURE_CLASSES, ClassId

# Example median/mean IoU tables of a double-zoom and a single-zoom model
DOUBLE_IOU = {
    ClassId.STREETS: (94.8, 93.1),
    ClassId.HIGHWAYS: (90.2, 84.0),
    ClassId.PARKS: (93.5, 86.4),
    ClassId.WATER: (95.6, 88.9),
    ClassId.BUILDINGS: (None, None),
    ClassId.HOSPITALS: (92.0, 85.7),
}
SINGLE_IOU = {
    ClassId.STREETS: (97.1, 95.9),
    ClassId.HIGHWAYS: (93.4, 88.2),
    ClassId.PARKS: (95.0, 89.3),
    ClassId.WATER: (96.2, 90.1),
    ClassId.BUILDINGS: (None, None),
    ClassId.HOSPITALS: (93.9, 88.0),
}


def make_table(iou):
    """Table with the given IoU and derived F1/precision/recall."""
    values = {}
    for class_id, (median, mean) in iou.items():
        for stat, value in ((Statistic.MEDIAN, median), (Statistic.MEAN, mean)):
            values[(class_id, stat, MetricName.IOU)] = value
            values[(class_id, stat, MetricName.F1)] = None if value is None else value + 2.0
            values[(class_id, stat, MetricName.PRECISION)] = None if value is None else value + 1.0
            values[(class_id, stat, MetricName.RECALL)] = None if value is None else value + 3.0
    return MetricTable(values=values)


def assert_tables_close(a: MetricTable, b: MetricTable):
    assert a.shape() == b.shape()
    assert set(a.values) == set(b.values)
    for cell, value in a.values.items():
        if value is None:
            assert b.values[cell] is None
        else:
            assert b.values[cell] == pytest.approx(value, abs=0.05)


# === Tests for value formatting ===


class TestValueFormatting:
    """Tests for one-decimal rendering and N/A."""

    def test_rounds_to_one_decimal(self):
        """Values render with exactly one decimal."""
        assert format_value(94.84) == "94.8"
        assert format_value(100.0) == "100.0"

    def test_na(self):
        """None renders as N/A and parses back to None."""
        assert format_value(None) == NA
        assert parse_value("N/A") is None

    def test_no_negative_zero(self):
        """Tiny negative differences do not render as -0.0."""
        assert format_value(-0.01) == "0.0"

    def test_parse_invalid(self):
        """Non-numeric cells are rejected."""
        with pytest.raises(MetricsError, match="Invalid report value"):
            parse_value("ninety")


# === Tests for report rendering ===


class TestRenderReport:
    """Tests for CSV and markdown reports."""

    def test_single_table_csv_header(self):
        """A plain table has one column per metric."""
        text = render_report(make_table(DOUBLE_IOU), ReportFormat.csv)
        header = text.splitlines()[0]
        assert header == "Class,Statistic,IoU,F1,Precision,Recall"

    def test_single_table_rows(self):
        """One row per class and statistic, Buildings N/A."""
        lines = render_report(make_table(DOUBLE_IOU), "csv").splitlines()
        assert len(lines) == 1 + len(FEATURE_CLASSES) * 2
        assert lines[1] == "Streets,Median,94.8,96.8,95.8,97.8"
        assert "Buildings,Median,N/A,N/A,N/A,N/A" in lines

    def test_diff_columns(self):
        """A diff table carries Double, Single and Diff per metric."""
        diff = diff_table(make_table(DOUBLE_IOU), make_table(SINGLE_IOU))
        lines = render_report(diff, "csv").splitlines()
        assert lines[0].startswith("Class,Statistic,IoU Double,IoU Single,IoU Diff,F1 Double")
        assert lines[1].startswith("Streets,Median,94.8,97.1,-2.3,")

    def test_markdown_table(self):
        """Markdown reports are pipe tables with a separator row."""
        text = render_report(make_table(DOUBLE_IOU), ReportFormat.markdown)
        lines = text.splitlines()
        assert lines[0] == "| Class | Statistic | IoU | F1 | Precision | Recall |"
        assert lines[1] == "|---|---|---|---|---|---|"
        assert lines[2].startswith("| Streets | Median | 94.8 |")

    def test_byte_stable(self):
        """Rendering twice gives identical text."""
        table = make_table(DOUBLE_IOU)
        assert render_report(table, "markdown") == render_report(table, "markdown")

    def test_unknown_format(self):
        """Unknown formats are rejected."""
        with pytest.raises(ValueError):
            render_report(make_table(DOUBLE_IOU), "html")


class TestParseReport:
    """Tests for parsing rendered reports back into tables."""

    @pytest.mark.parametrize("fmt", list(ReportFormat))
    def test_single_round_trip(self, fmt):
        """parse(render(t)) equals t at one-decimal precision."""
        table = make_table(DOUBLE_IOU)
        parsed = parse_report(render_report(table, fmt), fmt)
        assert isinstance(parsed, MetricTable)
        assert_tables_close(table, parsed)

    @pytest.mark.parametrize("fmt", list(ReportFormat))
    def test_diff_round_trip(self, fmt):
        """Diff reports parse back to a DiffTable."""
        diff = diff_table(make_table(DOUBLE_IOU), make_table(SINGLE_IOU))
        parsed = parse_report(render_report(diff, fmt), fmt)
        assert isinstance(parsed, DiffTable)
        assert_tables_close(diff.double, parsed.double)
        assert_tables_close(diff.single, parsed.single)
        value = parsed.diff.get(ClassId.STREETS, Statistic.MEDIAN, MetricName.IOU)
        assert value == pytest.approx(-2.3)

    def test_bad_header(self):
        """Reports with a foreign header are rejected."""
        with pytest.raises(MetricsError, match="Unrecognized report header"):
            parse_report("a,b,c\n1,2,3\n", "csv")

    def test_empty(self):
        """Empty reports are rejected."""
        with pytest.raises(MetricsError, match="Empty report"):
            parse_report("", "csv")


# === Tests for metrics files ===


class TestMetricsJsonl:
    """Tests for JSON Lines metric files."""

    def test_round_trip_keeps_full_precision(self, tmp_path):
        """Stored values are not rounded."""
        iou = {c: (None, None) for c in FEATURE_CLASSES}
        iou[ClassId.STREETS] = (94.8123, 93.1)
        table = make_table(iou)
        path = write_metrics_jsonl(table, tmp_path / "metrics" / "run.jsonl", label="zoom-16")
        loaded, label = read_metrics_jsonl(path)
        assert label == "zoom-16"
        assert loaded.get(ClassId.STREETS, Statistic.MEDIAN, MetricName.IOU) == 94.8123
        assert loaded.get(ClassId.WATER, Statistic.MEAN, MetricName.F1) is None

    def test_records_are_json(self, tmp_path):
        """Every line is a JSON object with null for N/A."""
        path = write_metrics_jsonl(make_table(DOUBLE_IOU), tmp_path / "m.jsonl")
        records = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(records) == 12
        buildings = [r for r in records if r["class_name"] == "Buildings"]
        assert all(r["iou"] is None for r in buildings)

    def test_missing_file(self, tmp_path):
        """Missing files raise MetricsError."""
        with pytest.raises(MetricsError, match="not found"):
            read_metrics_jsonl(tmp_path / "nope.jsonl")

    def test_invalid_record(self, tmp_path):
        """Unknown fields are reported with the line number."""
        path = tmp_path / "bad.jsonl"
        path.write_text('{"class_name": "Streets", "statistic": "Median", "bogus": 1}\n')
        with pytest.raises(MetricsError, match=":1: invalid metric record"):
            read_metrics_jsonl(path)


class TestSummaries:
    """Tests for the class breakdown and log summaries."""

    def test_class_fractions_csv(self):
        """Fractions render with two decimals for all seven classes."""
        text = format_class_fractions({ClassId.STREETS: 16.642, ClassId.BACKGROUND: 83.358})
        lines = text.splitlines()
        assert lines[0] == "Class,Mean Pixel Percentage"
        assert "Streets,16.64" in lines
        assert "Buildings,0.00" in lines
        assert len(lines) == 8

    def test_table_summary(self):
        """The summary names the median IoU of every class."""
        summary = format_table_summary(make_table(DOUBLE_IOU))
        assert summary.startswith("Median IoU: Streets=94.8")
        assert "Buildings=N/A" in summary
