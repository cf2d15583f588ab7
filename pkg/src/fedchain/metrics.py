"""Confusion matrices and classification metrics.

Metrics with a zero denominator are reported as ``None`` (never silently
coerced to 0), and F1 is always the harmonic mean of the reported precision
and recall.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np


class ClassScores(NamedTuple):
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]


@dataclass(eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # (k, k), rows = true class, columns = predicted

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be non-negative")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    per_class: tuple[ClassScores, ...]
    matrix: ConfusionMatrix


def confusion(true_labels, predicted_labels, num_classes: int) -> ConfusionMatrix:
    """counts[i][j] = samples with true class i predicted as class j."""
    true_labels = np.asarray(true_labels, dtype=np.int64)
    predicted_labels = np.asarray(predicted_labels, dtype=np.int64)
    if true_labels.shape != predicted_labels.shape or true_labels.ndim != 1:
        raise ValueError("label lists must be 1-D and equal length")
    for name, arr in (("true", true_labels), ("predicted", predicted_labels)):
        if len(arr) and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} labels out of range [0, {num_classes})")
    flat = np.bincount(true_labels * num_classes + predicted_labels,
                       minlength=num_classes * num_classes)
    return ConfusionMatrix(flat.reshape(num_classes, num_classes))


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


def _f1(precision: Optional[float], recall: Optional[float]) -> Optional[float]:
    if precision is None or recall is None or precision + recall == 0.0:
        return None
    return 2.0 * precision * recall / (precision + recall)


def _one_vs_rest(matrix: ConfusionMatrix, cls: int) -> ClassScores:
    counts = matrix.counts
    tp = int(counts[cls, cls])
    fp = int(counts[:, cls].sum()) - tp
    fn = int(counts[cls, :].sum()) - tp
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    return ClassScores(p, r, _f1(p, r))


def binary_metrics(matrix: ConfusionMatrix) -> MetricsReport:
    """Two-class report with class 1 as the positive (detected) class."""
    if matrix.num_classes != 2:
        raise ValueError("binary_metrics needs a 2x2 matrix")
    counts = matrix.counts
    tp, tn = int(counts[1, 1]), int(counts[0, 0])
    fp, fn = int(counts[0, 1]), int(counts[1, 0])
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    return MetricsReport(
        accuracy=_ratio(tp + tn, tp + tn + fp + fn),
        precision=precision,
        recall=recall,
        f1=_f1(precision, recall),
        per_class=(_one_vs_rest(matrix, 0), _one_vs_rest(matrix, 1)),
        matrix=matrix,
    )


def multiclass_metrics(matrix: ConfusionMatrix) -> MetricsReport:
    """One-vs-rest per class; headline values are macro averages."""
    if matrix.num_classes < 2:
        raise ValueError("need at least 2 classes")
    per_class = tuple(_one_vs_rest(matrix, c) for c in range(matrix.num_classes))

    def macro(values):
        if any(v is None for v in values):
            return None
        return float(np.mean(values))

    return MetricsReport(
        accuracy=_ratio(int(np.trace(matrix.counts)), matrix.total),
        precision=macro([s.precision for s in per_class]),
        recall=macro([s.recall for s in per_class]),
        f1=macro([s.f1 for s in per_class]),
        per_class=per_class,
        matrix=matrix,
    )


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def render_table(rows: list[tuple[str, MetricsReport]]) -> str:
    """Plain-text comparison table: one row of headline metrics per label."""
    header = ("Configuration", "Accuracy", "Precision", "Recall", "F1 Score")
    body = [(label, _fmt(r.accuracy), _fmt(r.precision), _fmt(r.recall),
             _fmt(r.f1)) for label, r in rows]
    widths = [max(len(line[i]) for line in [header] + body)
              for i in range(len(header))]
    lines = ["  ".join(col.ljust(w) for col, w in zip(line, widths)).rstrip()
             for line in [header] + body]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def report_csv_rows(label: str, report: MetricsReport,
                    class_names) -> list[list[str]]:
    """Rows for a metrics CSV: one headline row plus one row per class."""

    def cell(value: Optional[float]) -> str:
        return "" if value is None else repr(value)

    rows = [[label, "(all)", cell(report.accuracy), cell(report.precision),
             cell(report.recall), cell(report.f1)]]
    for name, scores in zip(class_names, report.per_class):
        rows.append([label, name, "", cell(scores.precision),
                     cell(scores.recall), cell(scores.f1)])
    return rows


METRICS_CSV_HEADER = ["configuration", "class", "accuracy", "precision",
                      "recall", "f1"]

__all__ = [
    "METRICS_CSV_HEADER", "ClassScores", "ConfusionMatrix", "MetricsReport",
    "binary_metrics", "confusion", "multiclass_metrics", "render_table",
    "report_csv_rows",
]
