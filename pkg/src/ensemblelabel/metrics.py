"""Confusion matrices and the reported performance metrics.

Accuracy-bearing metrics are computed over auto-labeled cases only: review
outcomes are tracked per truth class but excluded from the matrix, since a
flagged case is handed to a human rather than scored as right or wrong.
Zero-denominator metrics are reported as None (undefined), never silently
zeroed, and excluded from weighted averages with a warning.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .schema import TaskSchema
from .voting import EnsembleDecision


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts is (truth, predicted) over classes; review cases sit outside."""

    classes: tuple[str, ...]
    counts: np.ndarray
    review_by_truth: np.ndarray

    def __post_init__(self):
        n = len(self.classes)
        if self.counts.shape != (n, n):
            raise ValueError(f"counts shape {self.counts.shape} != ({n}, {n})")
        if self.review_by_truth.shape != (n,):
            raise ValueError("review_by_truth must have one entry per class")
        if (self.counts < 0).any() or (self.review_by_truth < 0).any():
            raise ValueError("negative counts")

    @property
    def n_auto(self) -> int:
        return int(self.counts.sum())

    @property
    def n_review(self) -> int:
        return int(self.review_by_truth.sum())

    @property
    def n_evaluated(self) -> int:
        return self.n_auto + self.n_review

    def index(self, label: str) -> int:
        return self.classes.index(label)


@dataclass
class MetricsReport:
    """All reported metrics; None marks an undefined (0/0) value."""

    accuracy: float | None
    f1_weighted: float | None
    f1_macro: float | None
    recall_positive: float | None
    specificity_positive: float | None
    precision: dict[str, float | None]
    recall: dict[str, float | None]
    f1: dict[str, float | None]
    jaccard: dict[str, float | None]
    review_rate: float | None
    n_auto: int
    n_review: int
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1_weighted": self.f1_weighted,
            "f1_macro": self.f1_macro,
            "recall_positive": self.recall_positive,
            "specificity_positive": self.specificity_positive,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "jaccard": self.jaccard,
            "review_rate": self.review_rate,
            "n_auto": self.n_auto,
            "n_review": self.n_review,
            "warnings": self.warnings,
        }


def build_confusion(
    truth: Mapping[str, str],
    decisions: Mapping[str, EnsembleDecision] | Sequence[EnsembleDecision],
    schema: TaskSchema,
) -> ConfusionMatrix:
    """Cross-tabulate decisions against truth labels.

    Review outcomes populate review_by_truth and stay out of counts. A
    decided case without a truth label is a hard error listing the ids.
    """
    if not isinstance(decisions, Mapping):
        decisions = {d.case_id: d for d in decisions}
    missing = sorted(cid for cid in decisions if cid not in truth)
    if missing:
        raise ValueError(f"decided cases with no truth label: {missing[:20]}"
                         + (" ..." if len(missing) > 20 else ""))
    classes = tuple(schema.valid_set)
    idx = {label: i for i, label in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    review = np.zeros(len(classes), dtype=np.int64)
    for cid, decision in decisions.items():
        t_label = truth[cid]
        if t_label not in idx:
            raise ValueError(f"truth label {t_label!r} for case {cid!r} not in valid set {classes}")
        if decision.outcome == schema.review_label:
            review[idx[t_label]] += 1
        else:
            counts[idx[t_label], idx[decision.outcome]] += 1
    return ConfusionMatrix(classes=classes, counts=counts, review_by_truth=review)


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def metrics(cm: ConfusionMatrix, positive_class: str | None = None) -> MetricsReport:
    """Compute accuracy, weighted/macro F1, positive recall/specificity, Jaccard.

    Positive recall/specificity use positive-vs-rest binarization. Weighted F1
    weighs each class F1 by its truth support among auto-labeled cases.
    """
    warnings: list[str] = []
    total = cm.n_auto
    classes = cm.classes
    accuracy = _ratio(int(np.trace(cm.counts)), total)
    if total == 0:
        warnings.append("no auto-labeled cases; all accuracy-bearing metrics undefined")

    precision: dict[str, float | None] = {}
    recall: dict[str, float | None] = {}
    f1: dict[str, float | None] = {}
    jaccard: dict[str, float | None] = {}
    support: dict[str, int] = {}
    for i, label in enumerate(classes):
        tp = int(cm.counts[i, i])
        fn = int(cm.counts[i, :].sum()) - tp
        fp = int(cm.counts[:, i].sum()) - tp
        support[label] = tp + fn
        precision[label] = _ratio(tp, tp + fp)
        recall[label] = _ratio(tp, tp + fn)
        f1[label] = _ratio(2 * tp, 2 * tp + fp + fn)
        jaccard[label] = _ratio(tp, tp + fp + fn)
        for name, value in (("precision", precision[label]), ("recall", recall[label]),
                            ("f1", f1[label]), ("jaccard", jaccard[label])):
            if value is None and total > 0:
                warnings.append(f"{name}[{label}] undefined (zero denominator)")

    defined = [(label, f1[label]) for label in classes if f1[label] is not None]
    skipped = [label for label in classes if f1[label] is None and support[label] > 0]
    if skipped:
        warnings.append(f"classes excluded from weighted F1: {skipped}")
    weight_total = sum(support[label] for label, _ in defined)
    f1_weighted = (
        sum(support[label] * value for label, value in defined) / weight_total
        if weight_total > 0 else None
    )
    f1_macro = sum(v for _, v in defined) / len(defined) if defined else None

    recall_positive = None
    specificity_positive = None
    if positive_class is not None:
        if positive_class not in classes:
            raise ValueError(f"positive class {positive_class!r} not in {classes}")
        p = cm.index(positive_class)
        tp = int(cm.counts[p, p])
        fn = int(cm.counts[p, :].sum()) - tp
        fp = int(cm.counts[:, p].sum()) - tp
        tn = total - tp - fn - fp
        recall_positive = _ratio(tp, tp + fn)
        specificity_positive = _ratio(tn, tn + fp)

    return MetricsReport(
        accuracy=accuracy,
        f1_weighted=f1_weighted,
        f1_macro=f1_macro,
        recall_positive=recall_positive,
        specificity_positive=specificity_positive,
        precision=precision,
        recall=recall,
        f1=f1,
        jaccard=jaccard,
        review_rate=_ratio(cm.n_review, cm.n_evaluated),
        n_auto=cm.n_auto,
        n_review=cm.n_review,
        warnings=warnings,
    )


CURVE_FIELDS = (
    "min_votes", "accuracy", "f1_weighted", "recall_positive",
    "specificity_positive", "n_review", "n_auto", "review_rate",
)


def threshold_curve(
    tables: Mapping[int, Sequence[EnsembleDecision]],
    truth: Mapping[str, str],
    schema: TaskSchema,
) -> list[dict]:
    """One metrics row per threshold, from the sweep's decision tables."""
    rows = []
    for k in sorted(tables):
        cm = build_confusion(truth, tables[k], schema)
        report = metrics(cm, schema.positive_class)
        rows.append({
            "min_votes": k,
            "accuracy": report.accuracy,
            "f1_weighted": report.f1_weighted,
            "recall_positive": report.recall_positive,
            "specificity_positive": report.specificity_positive,
            "n_review": report.n_review,
            "n_auto": report.n_auto,
            "review_rate": report.review_rate,
        })
    return rows


def write_threshold_curve(rows: Sequence[dict], csv_path: Path, json_path: Path | None = None):
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CURVE_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in CURVE_FIELDS})
    if json_path is not None:
        json_path.write_text(json.dumps(list(rows), indent=2) + "\n", encoding="utf-8")
