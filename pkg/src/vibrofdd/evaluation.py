"""Confusion matrices, per-class rates and the model comparison report."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import Empty, LengthMismatch
from .ingest import CLASS_NAMES


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray
    class_names: tuple[str, ...] = CLASS_NAMES

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self) -> str:
        lines = ["true\\predicted," + ",".join(self.class_names)]
        for name, row in zip(self.class_names, self.counts):
            lines.append(name + "," + ",".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"


def confusion(true_labels, predicted_labels, n_classes: int = 3,
              class_names: Sequence[str] = CLASS_NAMES) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=int)
    p = np.asarray(predicted_labels, dtype=int)
    if len(t) != len(p):
        raise LengthMismatch(f"{len(t)} true labels vs {len(p)} predictions")
    if len(t) == 0:
        raise Empty("no labels to compare")
    counts = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts, tuple(class_names))


@dataclass(frozen=True)
class ClassRate:
    tpr: float | None
    fnr: float | None
    support: int


def class_rates(cm: ConfusionMatrix) -> list[ClassRate]:
    """Per-class TPR/FNR; classes with an empty row get ``None`` rates."""
    out = []
    for c, row in enumerate(cm.counts):
        n = int(row.sum())
        if n == 0:
            out.append(ClassRate(None, None, 0))
        else:
            tpr = row[c] / n
            out.append(ClassRate(float(tpr), float(1.0 - tpr), n))
    return out


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise Empty("confusion matrix is empty")
    return float(np.trace(cm.counts) / cm.total)


def rates_csv(cm: ConfusionMatrix) -> str:
    lines = ["class,support,tpr,fnr"]
    for name, r in zip(cm.class_names, class_rates(cm)):
        fmt = (lambda v: "" if v is None else f"{v:.3f}")
        lines.append(f"{name},{r.support},{fmt(r.tpr)},{fmt(r.fnr)}")
    lines.append(f"overall,{cm.total},{accuracy(cm):.3f},{1 - accuracy(cm):.3f}")
    return "\n".join(lines) + "\n"


# -- comparison report ----------------------------------------------------------

REPORT_COLUMNS = (
    ("model", "Model"),
    ("accuracy_validation", "Accuracy (Validation)"),
    ("accuracy_test_split", "Accuracy (Test data 20% of Training)"),
    ("accuracy_test_random", "Accuracy (Test data Random)"),
    ("training_seconds", "Training Time (s)"),
    ("iterations", "Iterations"),
    ("prediction_obs_per_s", "Prediction Speed (obs/s)"),
    ("n_components", "Principal Components"),
)


@dataclass
class ReportRow:
    model: str
    accuracy_validation: float | None
    accuracy_test_split: float | None
    accuracy_test_random: float | None
    training_seconds: float
    iterations: int
    prediction_obs_per_s: float
    n_components: int
    throughput_samples: list[float] = field(default_factory=list)


def benchmark(name: str, train: Callable[[], object], predict: Callable[[object, np.ndarray], np.ndarray],
              x: np.ndarray, repeats: int = 5, **metrics) -> ReportRow:
    """Time one training run and ``repeats`` single-threaded prediction passes.

    ``metrics`` fills the accuracy, iteration and component columns. The
    reported throughput is the median over the repeats.
    """
    t0 = time.perf_counter()
    model = train()
    train_s = max(time.perf_counter() - t0, 1e-9)
    samples = []
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        for row in x:
            predict(model, row[None, :])
        dt = max(time.perf_counter() - t0, 1e-9)
        samples.append(len(x) / dt)
    return ReportRow(
        model=name,
        accuracy_validation=metrics.get("accuracy_validation"),
        accuracy_test_split=metrics.get("accuracy_test_split"),
        accuracy_test_random=metrics.get("accuracy_test_random"),
        training_seconds=train_s,
        iterations=int(metrics.get("iterations", 0)),
        prediction_obs_per_s=statistics.median(samples),
        n_components=int(metrics.get("n_components", 0)),
        throughput_samples=samples,
    )


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def report_csv(rows: Sequence[ReportRow]) -> str:
    lines = [",".join(key for key, _ in REPORT_COLUMNS)]
    for r in rows:
        lines.append(",".join(_cell(getattr(r, key)) for key, _ in REPORT_COLUMNS))
    return "\n".join(lines) + "\n"


def report_table(rows: Sequence[ReportRow]) -> str:
    """Aligned text table, one column per model."""
    body = [[title] + [_cell(getattr(r, key)) for r in rows] for key, title in REPORT_COLUMNS]
    widths = [max(len(line[i]) for line in body) for i in range(len(body[0]))]
    return "\n".join(
        "  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in body
    ) + "\n"
