"""Metrics and reporting: accuracy, macro precision/recall, confusion
matrices, per-domain breakdowns with unweighted averages, and relative
improvement deltas.

Precision and recall are macro-averaged (unweighted over classes with at
least one true instance) and every rendered report says so in its header.
Report percentages round half-to-even at two decimals via exact decimal
arithmetic, so results do not depend on float summation order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import Dataset, SplitPurityError, ToolkitError, is_modified
from .classifier import ClassifierModel, predict
from .features import FeatureSequence

REPORT_HEADER = (
    "classifier: mean-pooled features, one-hidden-layer tanh network "
    "(lightweight backbone substitute); precision/recall: macro-averaged"
)


class EvaluationError(ToolkitError):
    """Evaluation cannot proceed (empty split, mismatched domains, ...)."""


@dataclass(eq=False)
class Metrics:
    """Counts-derived metrics; confusion rows are true labels."""

    accuracy: float
    macro_precision: float
    macro_recall: float
    confusion: np.ndarray
    labels: tuple[str, ...]

    @property
    def count(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy_pct(self) -> float:
        return 100.0 * self.accuracy

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "count": self.count,
            "labels": list(self.labels),
            "confusion": self.confusion.astype(int).tolist(),
        }


def metrics_from_confusion(confusion: np.ndarray, labels: Iterable[str]) -> Metrics:
    """Derive accuracy and macro precision/recall from a confusion matrix.

    Macro statistics average over classes with at least one true instance;
    a class predicted zero times contributes precision 0.
    """
    confusion = np.asarray(confusion, dtype=np.int64)
    labels = tuple(labels)
    if confusion.shape != (len(labels), len(labels)):
        raise EvaluationError("confusion matrix shape does not match label count")
    total = confusion.sum()
    if total <= 0:
        raise EvaluationError("confusion matrix is empty")
    diag = np.diag(confusion).astype(np.float64)
    row_sums = confusion.sum(axis=1).astype(np.float64)
    col_sums = confusion.sum(axis=0).astype(np.float64)
    present = row_sums > 0
    recall = np.divide(diag, row_sums, out=np.zeros_like(diag), where=row_sums > 0)
    precision = np.divide(diag, col_sums, out=np.zeros_like(diag), where=col_sums > 0)
    return Metrics(
        accuracy=float(diag.sum() / total),
        macro_precision=float(precision[present].mean()),
        macro_recall=float(recall[present].mean()),
        confusion=confusion,
        labels=labels,
    )


def evaluate(
    model: ClassifierModel,
    dataset: Dataset,
    features: Mapping[str, FeatureSequence],
    split: str = "test",
) -> Metrics:
    """Evaluate on one split. Evaluation material must be natural."""
    records = [r for r in dataset.records if r.split == split]
    if not records:
        raise EvaluationError(f"no records in split {split!r}")
    for rec in records:
        if is_modified(rec.provenance):
            raise SplitPurityError(
                f"record {rec.id!r} in split {split!r} has {rec.provenance!r} provenance; "
                "evaluation data must stay natural",
                record_id=rec.id,
            )
    confusion = np.zeros((len(dataset.labels), len(dataset.labels)), dtype=np.int64)
    for rec in records:
        if rec.id not in features:
            raise EvaluationError(f"no features for record {rec.id!r}", record_id=rec.id)
        predicted, _ = predict(model, features[rec.id])
        confusion[dataset.labels.index(rec.dialect), dataset.labels.index(predicted)] += 1
    return metrics_from_confusion(confusion, dataset.labels)


def evaluate_by_domain(
    model: ClassifierModel,
    dataset: Dataset,
    features: Mapping[str, FeatureSequence],
    split: str = "test",
) -> dict[str, Metrics]:
    subset = dataset.subset(split=split)
    if not subset.records:
        raise EvaluationError(f"no records in split {split!r}")
    return {
        domain: evaluate(model, dataset.subset(domain=domain), features, split)
        for domain in subset.domains()
    }


def _round2(value: float | Decimal) -> float:
    return float(Decimal(repr(value) if isinstance(value, float) else value).quantize(
        Decimal("0.01"), rounding=ROUND_HALF_EVEN
    ))


def relative_delta(candidate_pct: float, baseline_pct: float) -> float:
    """Relative improvement in percent, 100*(candidate-baseline)/baseline,
    reported to two decimals."""
    if baseline_pct <= 0:
        raise EvaluationError(f"baseline must be positive, got {baseline_pct}")
    return _round2(100.0 * (candidate_pct - baseline_pct) / baseline_pct)


def domain_average(accuracies_pct: Iterable[float]) -> float:
    """Unweighted mean of per-domain accuracies, half-even at two decimals.

    Averaged in exact decimal arithmetic so the result is independent of
    input order.
    """
    values = [Decimal(repr(float(v))) for v in accuracies_pct]
    if not values:
        raise EvaluationError("need at least one domain")
    return float((sum(values) / len(values)).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))


@dataclass(eq=False)
class DomainReport:
    """Per-domain metrics plus their unweighted average, all in percent."""

    per_domain: dict[str, Metrics]
    average_accuracy: float
    deltas: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "header": REPORT_HEADER,
            "per_domain": {d: m.to_dict() for d, m in self.per_domain.items()},
            "average_accuracy": self.average_accuracy,
            "deltas": self.deltas,
        }


def domain_report(
    per_domain: Mapping[str, Metrics], baseline: DomainReport | None = None
) -> DomainReport:
    """Assemble a per-domain report, optionally with deltas vs a baseline."""
    if not per_domain:
        raise EvaluationError("need at least one domain")
    per_domain = dict(per_domain)
    # Per-domain accuracies are fixed at two decimals before averaging, the
    # same arithmetic as averaging a printed results table.
    rounded = {d: _round2(m.accuracy_pct) for d, m in per_domain.items()}
    average = domain_average(rounded[d] for d in sorted(rounded))
    deltas: dict[str, float] = {}
    if baseline is not None:
        if set(baseline.per_domain) != set(per_domain):
            raise EvaluationError(
                f"domain-set mismatch against baseline: {sorted(per_domain)} vs "
                f"{sorted(baseline.per_domain)}"
            )
        for domain in sorted(per_domain):
            deltas[domain] = relative_delta(
                rounded[domain], _round2(baseline.per_domain[domain].accuracy_pct)
            )
        deltas["average"] = relative_delta(average, baseline.average_accuracy)
    return DomainReport(per_domain, average, deltas)


def render_report(report: DomainReport, title: str = "evaluation") -> str:
    """Aligned text table: one row per domain, then the unweighted average,
    with relative-improvement columns when a baseline was supplied."""
    lines = [f"# {title}", f"# {REPORT_HEADER}", ""]
    has_delta = bool(report.deltas)
    header = f"{'domain':<14} {'acc%':>8} {'prec%':>8} {'rec%':>8} {'n':>6}"
    if has_delta:
        header += f" {'delta%':>8}"
    lines.append(header)
    lines.append("-" * len(header))
    for domain in sorted(report.per_domain):
        m = report.per_domain[domain]
        row = (
            f"{domain:<14} {m.accuracy_pct:>8.2f} {100 * m.macro_precision:>8.2f} "
            f"{100 * m.macro_recall:>8.2f} {m.count:>6d}"
        )
        if has_delta:
            row += f" {report.deltas[domain]:>+8.2f}"
        lines.append(row)
    avg_row = f"{'average':<14} {report.average_accuracy:>8.2f} {'':>8} {'':>8} {'':>6}"
    if has_delta:
        avg_row += f" {report.deltas['average']:>+8.2f}"
    lines.append(avg_row)
    return "\n".join(lines) + "\n"


def write_report(report: DomainReport, json_path: str | Path, text_path: str | Path | None = None,
                 title: str = "evaluation") -> None:
    json_path = Path(json_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if text_path is not None:
        Path(text_path).write_text(render_report(report, title), encoding="utf-8")
