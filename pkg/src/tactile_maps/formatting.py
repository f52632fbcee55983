"""Report rendering and metric file I/O.

Pure formatting functions for metric tables. Values are rounded to one
decimal only here; stored tables keep full precision.
"""

import csv
import io
import json
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, ValidationError

from .metrics import (
    Cell,
    DiffTable,
    MetricName,
    MetricsError,
    MetricTable,
    Statistic,
    diff_table,
)
from .palette import ClassId

NA = "N/A"
_DIFF_SETS = ("Double", "Single", "Diff")


class ReportFormat(str, Enum):
    csv = "csv"
    markdown = "markdown"


class MetricRecord(BaseModel):
    """One class x statistic row of a metrics file."""

    model_config = ConfigDict(extra="forbid")

    class_name: str
    statistic: Statistic
    iou: Optional[float] = None
    f1: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    label: Optional[str] = None


_RECORD_FIELDS = {
    MetricName.IOU: "iou",
    MetricName.F1: "f1",
    MetricName.PRECISION: "precision",
    MetricName.RECALL: "recall",
}


def format_value(value: Optional[float]) -> str:
    if value is None:
        return NA
    rounded = round(value, 1)
    if rounded == 0:
        rounded = 0.0  # no "-0.0"
    return f"{rounded:.1f}"


def parse_value(text: str) -> Optional[float]:
    text = text.strip()
    if text == NA:
        return None
    try:
        return float(text)
    except ValueError as e:
        raise MetricsError(f"Invalid report value '{text}'") from e


def _header(is_diff: bool) -> List[str]:
    header = ["Class", "Statistic"]
    for metric in MetricName:
        if is_diff:
            header.extend(f"{metric.value} {s}" for s in _DIFF_SETS)
        else:
            header.append(metric.value)
    return header


def _rows(table: Union[MetricTable, DiffTable]) -> List[List[str]]:
    base = table.double if isinstance(table, DiffTable) else table
    rows = []
    for class_id, stat in base.rows():
        row = [class_id.display_name, stat.value]
        for metric in MetricName:
            if isinstance(table, DiffTable):
                row.extend(
                    format_value(t.get(class_id, stat, metric))
                    for t in (table.double, table.single, table.diff)
                )
            else:
                row.append(format_value(table.get(class_id, stat, metric)))
        rows.append(row)
    return rows


def render_report(
    table: Union[MetricTable, DiffTable], fmt: Union[ReportFormat, str] = ReportFormat.csv
) -> str:
    """Serialize a table as CSV or a markdown pipe table (byte-stable)."""
    fmt = ReportFormat(fmt)
    header = _header(isinstance(table, DiffTable))
    rows = _rows(table)

    if fmt is ReportFormat.csv:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buffer.getvalue()

    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return "\n".join(lines) + "\n"


def _split_markdown(text: str) -> List[List[str]]:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line.startswith("|"):
            continue
        cells = [c.strip() for c in line.strip("|").split("|")]
        if all(set(c) <= {"-", ":"} for c in cells):
            continue
        rows.append(cells)
    return rows


def parse_report(
    text: str, fmt: Union[ReportFormat, str] = ReportFormat.csv
) -> Union[MetricTable, DiffTable]:
    """Inverse of :func:`render_report` at one-decimal precision.

    Diff columns are recomputed from the parsed double and single values.
    """
    fmt = ReportFormat(fmt)
    if fmt is ReportFormat.csv:
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
    else:
        rows = _split_markdown(text)
    if not rows:
        raise MetricsError("Empty report")

    header, body = rows[0], rows[1:]
    is_diff = "Double" in " ".join(header)
    if header != _header(is_diff):
        raise MetricsError(f"Unrecognized report header: {header}")

    sets: Dict[str, Dict[Cell, Optional[float]]] = {s: {} for s in _DIFF_SETS}
    classes: List[ClassId] = []
    statistics: List[Statistic] = []
    for row in body:
        if len(row) != len(header):
            raise MetricsError(f"Report row has {len(row)} cells, expected {len(header)}")
        class_id = ClassId.from_name(row[0])
        stat = Statistic(row[1])
        if class_id not in classes:
            classes.append(class_id)
        if stat not in statistics:
            statistics.append(stat)
        cells = iter(row[2:])
        for metric in MetricName:
            for set_name in _DIFF_SETS if is_diff else ("Single",):
                sets[set_name][(class_id, stat, metric)] = parse_value(next(cells))

    def _table(values: Dict[Cell, Optional[float]]) -> MetricTable:
        return MetricTable(values=values, classes=tuple(classes), statistics=tuple(statistics))

    if not is_diff:
        return _table(sets["Single"])
    return diff_table(_table(sets["Double"]), _table(sets["Single"]))


# === METRICS FILES (JSON Lines) ===


def metric_records(table: MetricTable, label: Optional[str] = None) -> List[MetricRecord]:
    records = []
    for class_id, stat in table.rows():
        values = {
            _RECORD_FIELDS[m]: table.get(class_id, stat, m) for m in MetricName
        }
        records.append(
            MetricRecord(class_name=class_id.display_name, statistic=stat, label=label, **values)
        )
    return records


def write_metrics_jsonl(
    table: MetricTable, path: Union[str, Path], label: Optional[str] = None
) -> Path:
    """Write one JSON record per class x statistic; N/A is ``null``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in metric_records(table, label):
            f.write(json.dumps(record.model_dump(mode="json"), sort_keys=True) + "\n")
    return path


def read_metrics_jsonl(path: Union[str, Path]) -> Tuple[MetricTable, Optional[str]]:
    path = Path(path)
    if not path.exists():
        raise MetricsError(f"Metrics file not found: {path}")

    values: Dict[Cell, Optional[float]] = {}
    classes: List[ClassId] = []
    statistics: List[Statistic] = []
    label: Optional[str] = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = MetricRecord.model_validate_json(line)
            except ValidationError as e:
                raise MetricsError(f"{path}:{lineno}: invalid metric record: {e}") from e
            class_id = ClassId.from_name(record.class_name)
            if class_id not in classes:
                classes.append(class_id)
            if record.statistic not in statistics:
                statistics.append(record.statistic)
            label = label or record.label
            for metric, attr in _RECORD_FIELDS.items():
                values[(class_id, record.statistic, metric)] = getattr(record, attr)
    if not values:
        raise MetricsError(f"Metrics file {path} holds no records")
    return (
        MetricTable(values=values, classes=tuple(classes), statistics=tuple(statistics)),
        label,
    )


def format_class_fractions(fractions: Dict[ClassId, float]) -> str:
    """CSV of mean pixel percentages per class."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["Class", "Mean Pixel Percentage"])
    for class_id in ClassId:
        writer.writerow([class_id.display_name, f"{fractions.get(class_id, 0.0):.2f}"])
    return buffer.getvalue()


def format_table_summary(table: MetricTable, metric: MetricName = MetricName.IOU) -> str:
    """One line per class with the median value of ``metric``, for logs."""
    parts = []
    stat = Statistic.MEDIAN if Statistic.MEDIAN in table.statistics else table.statistics[0]
    for class_id in table.classes:
        parts.append(f"{class_id.display_name}={format_value(table.get(class_id, stat, metric))}")
    return f"{stat.value} {metric.value}: " + ", ".join(parts)

