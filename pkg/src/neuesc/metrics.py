"""Classification metrics: accuracy, macro/weighted F1, confusion matrices.

Per-class F1 with an empty denominator is defined as 0 and still counts in
the macro mean, which is why macro-F1 sits far below weighted-F1 on heavily
imbalanced label sets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

NO_PREDICTION = -1  # parse-failure marker: always scored as incorrect


@dataclass
class MetricsReport:
    task: str
    accuracy: float
    macro_f1: float
    weighted_f1: float
    per_class_precision: list[float]
    per_class_recall: list[float]
    per_class_f1: list[float]
    support: list[int]

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "per_class_precision": self.per_class_precision,
            "per_class_recall": self.per_class_recall,
            "per_class_f1": self.per_class_f1,
            "support": self.support,
        }


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = gold, columns = predicted

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    def row_normalized(self) -> np.ndarray:
        totals = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = self.counts / totals
        return np.where(totals > 0, out, 0.0)


def _validate(gold, pred, num_classes: int, allow_no_prediction: bool):
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape or gold.ndim != 1:
        raise ValueError(
            f"gold and predictions must be aligned 1-d sequences, "
            f"got shapes {gold.shape} and {pred.shape}"
        )
    if gold.size == 0:
        raise ValueError("empty prediction set")
    if gold.min() < 0 or gold.max() >= num_classes:
        raise ValueError(f"gold label out of range [0, {num_classes})")
    lo = NO_PREDICTION if allow_no_prediction else 0
    if pred.min() < lo or pred.max() >= num_classes:
        raise ValueError(f"predicted label out of range [0, {num_classes})")
    return gold, pred


def compute_metrics(
    gold: Sequence[int],
    pred: Sequence[int],
    num_classes: int,
    task: str = "",
    allow_no_prediction: bool = False,
) -> MetricsReport:
    """Accuracy, per-class P/R/F1, macro-F1, and support-weighted F1.

    With allow_no_prediction, a prediction of NO_PREDICTION (-1) counts as
    incorrect for its gold class without being a false positive anywhere.
    """
    gold, pred = _validate(gold, pred, num_classes, allow_no_prediction)
    accuracy = float(np.mean(gold == pred))

    precision, recall, f1, support = [], [], [], []
    for c in range(num_classes):
        tp = int(np.sum((gold == c) & (pred == c)))
        fp = int(np.sum((gold != c) & (pred == c)))
        fn = int(np.sum((gold == c) & (pred != c)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(f)
        support.append(tp + fn)

    total = sum(support)
    weighted = sum(s * f for s, f in zip(support, f1)) / total if total else 0.0
    return MetricsReport(
        task=task,
        accuracy=accuracy,
        macro_f1=float(np.mean(f1)),
        weighted_f1=float(weighted),
        per_class_precision=precision,
        per_class_recall=recall,
        per_class_f1=f1,
        support=support,
    )


def confusion_matrix(
    gold: Sequence[int], pred: Sequence[int], num_classes: int
) -> ConfusionMatrix:
    gold, pred = _validate(gold, pred, num_classes, allow_no_prediction=False)
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (gold, pred), 1)
    return ConfusionMatrix(counts=counts)


def _format_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def render_report(
    reports: dict[str, dict[str, MetricsReport]],
    matrices: dict[str, dict[str, ConfusionMatrix]] | None,
    destination: str | Path,
) -> list[Path]:
    """Write a metrics table (text + JSON) and optional confusion matrices.

    `reports` maps a result-row name (model/strategy) to per-task reports.
    Re-rendering identical inputs produces byte-identical files.
    """
    if not reports:
        raise ValueError("render_report requires at least one report")
    destination = Path(destination)
    destination.mkdir(parents=True, exist_ok=True)

    tasks = sorted({task for by_task in reports.values() for task in by_task})
    header = ["model"]
    for task in tasks:
        header += [f"{task}_acc", f"{task}_mF1", f"{task}_wF1"]
    rows = []
    for name in sorted(reports):
        row = [name]
        for task in tasks:
            rep = reports[name].get(task)
            if rep is None:
                row += ["-", "-", "-"]
            else:
                row += [
                    f"{100 * rep.accuracy:.2f}",
                    f"{100 * rep.macro_f1:.2f}",
                    f"{100 * rep.weighted_f1:.2f}",
                ]
        rows.append(row)

    written = []
    table_path = destination / "results.txt"
    table_path.write_text(_format_table(header, rows), encoding="utf-8")
    written.append(table_path)

    json_path = destination / "results.json"
    payload = {
        name: {task: rep.to_dict() for task, rep in sorted(by_task.items())}
        for name, by_task in sorted(reports.items())
    }
    json_path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    written.append(json_path)

    if matrices:
        lines = []
        payload = {}
        for name in sorted(matrices):
            for task in sorted(matrices[name]):
                cm = matrices[name][task]
                lines.append(f"# {name} / {task} (rows=gold, cols=predicted)")
                for row in cm.counts:
                    lines.append(" ".join(f"{int(v):6d}" for v in row))
                lines.append("# row-normalized")
                for row in cm.row_normalized():
                    lines.append(" ".join(f"{v:6.3f}" for v in row))
                lines.append("")
                payload[f"{name}/{task}"] = cm.counts.tolist()
        cm_txt = destination / "confusion_matrices.txt"
        cm_txt.write_text("\n".join(lines), encoding="utf-8")
        written.append(cm_txt)
        cm_json = destination / "confusion_matrices.json"
        cm_json.write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        written.append(cm_json)
    return written
