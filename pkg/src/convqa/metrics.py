"""Multi-class evaluation: confusion matrix, accuracy and macro
precision/recall/F1, all on a 0-100 percent scale.

Conventions that matter (they are what reproduces the published result
tables from their confusion matrices):

* rows are actual classes, columns are predicted classes;
* per-class ratios with a 0/0 are defined as 0 (a class that is never
  predicted contributes precision 0, not NaN);
* macro metrics are unweighted means over all classes, and macro F1 is
  the mean of per-class F1 values, not the harmonic mean of macro
  precision and macro recall.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from . import nn
from .nn import HyperParams, ModelParams


class MetricsError(Exception):
    pass


def round_pct(x: float) -> float:
    """Two decimal places, ties away from zero."""
    return float(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[actual][predicted], with optional class names."""

    counts: np.ndarray
    labels: tuple[str, ...] | None = None

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def label_names(self) -> tuple[str, ...]:
        if self.labels is not None:
            return self.labels
        return tuple(str(i) for i in range(self.num_classes))

    @classmethod
    def from_csv(cls, path) -> "ConfusionMatrix":
        """Read a matrix stored as CSV: optional ``#`` comment lines, a
        header row of class names, then one row of counts per class."""
        rows = []
        labels: tuple[str, ...] | None = None
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                cells = [c.strip() for c in line.split(",")]
                if labels is None:
                    labels = tuple(cells)
                    continue
                rows.append([int(c) for c in cells])
        counts = np.asarray(rows, dtype=np.int64)
        if labels is None or counts.shape[0] != counts.shape[1] or len(labels) != counts.shape[0]:
            raise MetricsError(f"malformed confusion matrix file {path}")
        return cls(counts=counts, labels=labels)


@dataclass(frozen=True)
class PerClass:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: tuple[PerClass, ...]
    confusion: ConfusionMatrix

    def to_json_dict(self) -> dict:
        return {
            "accuracy": round_pct(self.accuracy),
            "macro_precision": round_pct(self.macro_precision),
            "macro_recall": round_pct(self.macro_recall),
            "macro_f1": round_pct(self.macro_f1),
            "per_class": [
                {
                    "precision": round_pct(pc.precision),
                    "recall": round_pct(pc.recall),
                    "f1": round_pct(pc.f1),
                    "support": pc.support,
                }
                for pc in self.per_class
            ],
            "confusion": self.confusion.counts.tolist(),
            "labels": list(self.confusion.label_names()),
        }

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def format_table(self) -> str:
        names = self.confusion.label_names()
        width = max(12, max(len(n) for n in names) + 1)
        lines = [
            f"accuracy        {round_pct(self.accuracy):7.2f}",
            f"macro precision {round_pct(self.macro_precision):7.2f}",
            f"macro recall    {round_pct(self.macro_recall):7.2f}",
            f"macro F1        {round_pct(self.macro_f1):7.2f}",
            "",
            f"{'class':<{width}} {'prec':>7} {'recall':>7} {'f1':>7} {'support':>8}",
        ]
        for name, pc in zip(names, self.per_class):
            lines.append(
                f"{name:<{width}} {round_pct(pc.precision):7.2f} "
                f"{round_pct(pc.recall):7.2f} {round_pct(pc.f1):7.2f} "
                f"{pc.support:8d}"
            )
        return "\n".join(lines)


def confusion_from_predictions(pairs, num_classes: int,
                               labels=None) -> ConfusionMatrix:
    """Count (actual, predicted) id pairs into a C x C matrix."""
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    for actual, predicted in pairs:
        if not (0 <= actual < num_classes and 0 <= predicted < num_classes):
            raise MetricsError(
                f"class id out of range: ({actual}, {predicted}) with C={num_classes}"
            )
        counts[actual, predicted] += 1
    return ConfusionMatrix(
        counts=counts, labels=tuple(labels) if labels is not None else None
    )


def metrics_from_confusion(cm: ConfusionMatrix) -> EvalReport:
    """Accuracy and per-class/macro precision, recall, F1 as percentages."""
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise MetricsError("empty confusion matrix")
    diag = np.diag(counts)
    col_sums = counts.sum(axis=0)
    row_sums = counts.sum(axis=1)

    def safe_div(num, den):
        return np.divide(num, den, out=np.zeros_like(num), where=den > 0)

    precision = safe_div(diag, col_sums)
    recall = safe_div(diag, row_sums)
    f1 = safe_div(2.0 * precision * recall, precision + recall)

    per_class = tuple(
        PerClass(
            precision=100.0 * precision[c],
            recall=100.0 * recall[c],
            f1=100.0 * f1[c],
            support=int(row_sums[c]),
        )
        for c in range(cm.num_classes)
    )
    return EvalReport(
        accuracy=100.0 * float(diag.sum() / total),
        macro_precision=100.0 * float(precision.mean()),
        macro_recall=100.0 * float(recall.mean()),
        macro_f1=100.0 * float(f1.mean()),
        per_class=per_class,
        confusion=cm,
    )


def predict_ids(params: ModelParams, token_ids, hp: HyperParams,
                batch_size: int = 256) -> np.ndarray:
    """Eval-mode argmax predictions for a (N, L) id matrix."""
    ids = np.asarray(token_ids, dtype=np.int64)
    out = np.empty(ids.shape[0], dtype=np.int64)
    for start in range(0, ids.shape[0], batch_size):
        chunk = ids[start : start + batch_size]
        trace = nn.forward_batch(chunk, None, params, hp, mode=nn.EVAL)
        out[start : start + chunk.shape[0]] = trace.probs.argmax(axis=1)
    return out


def evaluate_model(params: ModelParams, dataset, hp: HyperParams,
                   labels=None, batch_size: int = 256) -> EvalReport:
    """Eval-mode forward over a dataset of encoded examples, argmax as
    the prediction, then confusion counts and derived metrics."""
    dataset = list(dataset)
    if not dataset:
        raise MetricsError("cannot evaluate on an empty dataset")
    ids = np.asarray([e.token_ids for e in dataset], dtype=np.int64)
    actual = np.asarray([e.label_id for e in dataset], dtype=np.int64)
    predicted = predict_ids(params, ids, hp, batch_size=batch_size)
    cm = confusion_from_predictions(
        zip(actual.tolist(), predicted.tolist()), params.num_classes, labels=labels
    )
    return metrics_from_confusion(cm)
