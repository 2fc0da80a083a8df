"""Multiclass evaluation: confusion matrices, one-vs-rest tallies,
accuracy/precision/recall/F-measure, ROC curves with AUC, and report assembly.

Undefined metrics (zero denominators) are never silently zeroed: every
per-class and aggregate figure is a :class:`MetricValue` whose ``defined``
flag survives into the serialized report, with 0.0 as the declared fallback
value.  Aggregates come in micro (pooled counts), macro (unweighted mean)
and weighted (support-weighted mean) flavors; for single-label multiclass
data micro-precision, micro-recall and overall accuracy coincide exactly.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ParameterError, UndefinedMetricError

logger = logging.getLogger(__name__)

METRIC_NAMES = ("accuracy", "precision", "recall", "f_measure", "auc")


class MetricValue(NamedTuple):
    value: float
    defined: bool = True

    def __float__(self) -> float:
        return self.value

    def to_dict(self) -> dict:
        return {"value": self.value, "defined": self.defined}


@dataclass(frozen=True)
class ConfusionMatrix:
    """K x K counts; rows are true classes, columns predicted classes."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        k = len(self.class_names)
        if self.counts.shape != (k, k):
            raise ParameterError(f"counts shape {self.counts.shape} does not match "
                                 f"{k} class names")

    @property
    def n(self) -> int:
        return int(self.counts.sum())


class BinaryTally(NamedTuple):
    """One-vs-rest outcome counts for a single class."""

    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class RocCurve:
    """Threshold-sweep operating points, (0,0) to (1,1), plus trapezoidal AUC."""

    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.fpr, self.tpr])


def confusion_matrix(y_true, y_pred, num_classes: int,
                     class_names: tuple[str, ...] | None = None) -> ConfusionMatrix:
    """counts[i][j] = number of instances with true class i predicted as j."""
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise ParameterError(f"y_true and y_pred must be equal-length vectors, "
                             f"got {t.shape} and {p.shape}")
    if len(t) and (t.min() < 0 or t.max() >= num_classes
                   or p.min() < 0 or p.max() >= num_classes):
        raise ParameterError(f"class indices must lie in [0, {num_classes})")
    counts = np.bincount(t * num_classes + p, minlength=num_classes * num_classes)
    names = class_names or tuple(f"class_{i}" for i in range(num_classes))
    return ConfusionMatrix(counts.reshape(num_classes, num_classes), tuple(names))


def normalize_rows(cm: ConfusionMatrix | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalized matrix plus a flag vector marking all-zero rows
    (left as zeros rather than NaN)."""
    counts = cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm)
    counts = counts.astype(np.float64)
    row_sums = counts.sum(axis=1)
    zero_rows = row_sums == 0
    safe = np.where(zero_rows, 1.0, row_sums)
    return counts / safe[:, None], zero_rows


def binary_tallies(cm: ConfusionMatrix) -> list[BinaryTally]:
    counts = cm.counts
    n = int(counts.sum())
    tallies = []
    for i in range(len(cm.class_names)):
        tp = int(counts[i, i])
        fn = int(counts[i].sum()) - tp
        fp = int(counts[:, i].sum()) - tp
        tallies.append(BinaryTally(tp=tp, tn=n - tp - fn - fp, fp=fp, fn=fn))
    return tallies


def accuracy(tally: BinaryTally) -> float:
    """(TP + TN) / N."""
    if tally.n == 0:
        raise UndefinedMetricError("accuracy is undefined for an empty tally")
    return (tally.tp + tally.tn) / tally.n


def precision(tally: BinaryTally) -> MetricValue:
    """TP / (TP + FP); flagged undefined when nothing was predicted positive."""
    if tally.tp + tally.fp == 0:
        return MetricValue(0.0, defined=False)
    return MetricValue(tally.tp / (tally.tp + tally.fp))


def recall(tally: BinaryTally) -> MetricValue:
    """TP / (TP + FN); flagged undefined when the class has no instances."""
    if tally.tp + tally.fn == 0:
        return MetricValue(0.0, defined=False)
    return MetricValue(tally.tp / (tally.tp + tally.fn))


def f_measure(precision_value: float, recall_value: float, beta: float = 1.0) -> MetricValue:
    """(1 + beta^2) * R * P / (beta^2 * P + R); harmonic mean at beta = 1."""
    p, r = float(precision_value), float(recall_value)
    if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
        raise ParameterError(f"precision and recall must lie in [0, 1], got {p}, {r}")
    if beta <= 0:
        raise ParameterError(f"beta must be > 0, got {beta}")
    if p == 0.0 and r == 0.0:
        return MetricValue(0.0, defined=False)
    b2 = beta * beta
    return MetricValue((1.0 + b2) * r * p / (b2 * p + r))


def roc_curve(scores, is_positive) -> RocCurve:
    """Sweep thresholds over the distinct scores from high to low.

    Instances with equal scores move together, so the curve is tie-correct;
    it always starts at (0,0) and ends at (1,1).  AUC by trapezoidal rule.
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(is_positive, dtype=bool)
    if s.shape != pos.shape or s.ndim != 1:
        raise ParameterError(f"scores and is_positive must be equal-length vectors, "
                             f"got {s.shape} and {pos.shape}")
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"ROC needs at least one positive and one negative instance "
            f"(got {n_pos} positives, {n_neg} negatives)")

    order = np.argsort(-s, kind="stable")
    sorted_scores = s[order]
    sorted_pos = pos[order]
    # last index of each tie group
    boundaries = np.nonzero(np.diff(sorted_scores))[0]
    group_ends = np.append(boundaries, len(s) - 1)
    cum_tp = np.cumsum(sorted_pos)[group_ends]
    cum_fp = (group_ends + 1) - cum_tp
    tpr = np.concatenate([[0.0], cum_tp / n_pos])
    fpr = np.concatenate([[0.0], cum_fp / n_neg])
    return RocCurve(fpr=fpr, tpr=tpr, auc=float(np.trapezoid(tpr, fpr)))


def _aggregate(values: list[MetricValue], weights: np.ndarray | None = None) -> MetricValue:
    vals = np.array([v.value for v in values])
    defined = all(v.defined for v in values)
    if weights is None:
        return MetricValue(float(vals.mean()), defined)
    return MetricValue(float((vals * weights).sum()), defined)


@dataclass
class EvalReport:
    """Everything the evaluation stage emits for one prediction set."""

    class_names: tuple[str, ...]
    n: int
    confusion: ConfusionMatrix
    confusion_normalized: np.ndarray
    zero_rows: np.ndarray
    overall_accuracy: float
    per_class: dict[str, dict]
    aggregates: dict[str, dict[str, MetricValue]]
    roc: dict[str, RocCurve | None]
    predictions: np.ndarray

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "class_names": list(self.class_names),
            "confusion_matrix": self.confusion.counts.tolist(),
            "confusion_matrix_normalized": self.confusion_normalized.tolist(),
            "zero_rows": self.zero_rows.tolist(),
            "overall_accuracy": self.overall_accuracy,
            "per_class": {
                name: {"support": entry["support"],
                       **{m: entry[m].to_dict() for m in METRIC_NAMES}}
                for name, entry in self.per_class.items()
            },
            "aggregates": {
                mode: {m: mv.to_dict() for m, mv in metrics.items()}
                for mode, metrics in self.aggregates.items()
            },
            "roc": {
                name: None if curve is None else
                {"points": curve.points.tolist(), "auc": curve.auc}
                for name, curve in self.roc.items()
            },
        }

    def write_json(self, path: str | os.PathLike) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        os.replace(tmp, path)

    def write_confusion_csv(self, path: str | os.PathLike) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["true\\predicted", *self.class_names])
            for name, row in zip(self.class_names, self.confusion.counts):
                writer.writerow([name, *row.tolist()])
        os.replace(tmp, path)

    def write_roc_csvs(self, directory: str | os.PathLike) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for name, curve in self.roc.items():
            if curve is None:
                continue
            path = directory / f"roc_{name}.csv"
            tmp = path.with_name(path.name + ".tmp")
            with open(tmp, "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(["fpr", "tpr"])
                for x, y in curve.points:
                    writer.writerow([repr(float(x)), repr(float(y))])
            os.replace(tmp, path)
            written.append(path)
        return written


def build_report(y_true, probabilities, class_names) -> EvalReport:
    """Assemble the full evaluation report from per-instance class scores.

    Predictions are the row argmax (ties resolved to the lowest class index
    and logged).  Per-class ROC uses that class's probability column; the
    micro-average ROC pools every (instance, class) one-vs-rest pair.
    """
    y = np.asarray(y_true, dtype=np.int64)
    probs = np.asarray(probabilities, dtype=np.float64)
    class_names = tuple(class_names)
    k = len(class_names)
    if probs.ndim != 2 or probs.shape[1] != k:
        raise ParameterError(f"probabilities must be (N, {k}), got {probs.shape}")
    if len(y) != len(probs) or len(y) == 0:
        raise ParameterError(f"need equal, non-zero instance counts, got "
                             f"{len(y)} labels and {len(probs)} rows")
    if y.min() < 0 or y.max() >= k:
        raise ParameterError(f"labels must lie in [0, {k})")
    row_sums = probs.sum(axis=1)
    if np.abs(row_sums - 1.0).max() > 1e-6:
        worst = int(np.abs(row_sums - 1.0).argmax())
        raise ParameterError(f"probability rows must sum to 1 +- 1e-6; row {worst} "
                             f"sums to {row_sums[worst]!r}")

    ties = (probs == probs.max(axis=1, keepdims=True)).sum(axis=1) > 1
    if ties.any():
        logger.info("argmax ties on %d instances resolved to the lowest class index",
                    int(ties.sum()))
    predictions = probs.argmax(axis=1)

    cm = confusion_matrix(y, predictions, k, class_names)
    normalized, zero_rows = normalize_rows(cm)
    tallies = binary_tallies(cm)

    per_class: dict[str, dict] = {}
    roc: dict[str, RocCurve | None] = {}
    for i, name in enumerate(class_names):
        tally = tallies[i]
        p = precision(tally)
        r = recall(tally)
        f = f_measure(p.value, r.value) if (p.defined and r.defined) \
            else MetricValue(0.0, defined=False)
        try:
            curve = roc_curve(probs[:, i], y == i)
            auc = MetricValue(curve.auc)
        except UndefinedMetricError:
            curve = None
            auc = MetricValue(0.0, defined=False)
        roc[name] = curve
        per_class[name] = {"support": int(cm.counts[i].sum()),
                           "accuracy": MetricValue(accuracy(tally)),
                           "precision": p, "recall": r, "f_measure": f, "auc": auc}

    # micro: pool the one-vs-rest counts
    tp = sum(t.tp for t in tallies)
    fp = sum(t.fp for t in tallies)
    fn = sum(t.fn for t in tallies)
    tn = sum(t.tn for t in tallies)
    micro_p = MetricValue(tp / (tp + fp))
    micro_r = MetricValue(tp / (tp + fn))
    micro_curve = roc_curve(probs.ravel(),
                            (np.arange(k)[None, :] == y[:, None]).ravel())
    roc["micro"] = micro_curve
    micro = {"accuracy": MetricValue((tp + tn) / (tp + tn + fp + fn)),
             "precision": micro_p, "recall": micro_r,
             "f_measure": f_measure(micro_p.value, micro_r.value),
             "auc": MetricValue(micro_curve.auc)}

    supports = cm.counts.sum(axis=1)
    weights = supports / cm.n
    macro = {}
    weighted = {}
    for metric in METRIC_NAMES:
        values = [per_class[name][metric] for name in class_names]
        macro[metric] = _aggregate(values)
        weighted[metric] = _aggregate(values, weights)

    overall = int(np.trace(cm.counts)) / cm.n
    return EvalReport(class_names=class_names, n=cm.n, confusion=cm,
                      confusion_normalized=normalized, zero_rows=zero_rows,
                      overall_accuracy=overall, per_class=per_class,
                      aggregates={"micro": micro, "macro": macro, "weighted": weighted},
                      roc=roc, predictions=predictions)
