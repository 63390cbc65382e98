"""Classification metrics: confusion counts, scalar scores, averages, ROC/AUC.

Attack is the positive class everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

POSITIVE = "attack"
NEGATIVE = "normal"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            tp=self.tp + other.tp, fp=self.fp + other.fp,
            fn=self.fn + other.fn, tn=self.tn + other.tn,
        )


@dataclass(frozen=True)
class RocCurve:
    """Threshold-swept (FPR, TPR) points, FPR ascending from (0,0) to (1,1).

    thresholds[i] is the score cut that produces points[i] (classify attack
    when score >= cut); the endpoints carry +inf / -inf.
    """

    points: tuple[tuple[float, float], ...]
    thresholds: tuple[float, ...]
    auc: float


def confusion(predictions, truths) -> ConfusionMatrix:
    """Count tp/fp/fn/tn over paired attack/normal label sequences."""
    predictions = list(predictions)
    truths = list(truths)
    if len(predictions) != len(truths):
        raise ValueError(f"{len(predictions)} predictions vs {len(truths)} truths")
    tp = fp = fn = tn = 0
    for i, (pred, truth) in enumerate(zip(predictions, truths)):
        if truth not in (POSITIVE, NEGATIVE):
            raise DataError(f"record {i}: ground truth {truth!r} is not attack/normal")
        if pred not in (POSITIVE, NEGATIVE):
            raise DataError(f"record {i}: prediction {pred!r} is not attack/normal")
        if truth == POSITIVE:
            if pred == POSITIVE:
                tp += 1
            else:
                fn += 1
        else:
            if pred == POSITIVE:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def scalar_metrics(cm: ConfusionMatrix) -> dict:
    """Accuracy, precision, recall, F1; zero denominators yield 0 + degenerate flag."""
    if cm.total == 0:
        raise DataError("cannot score an empty confusion matrix")
    degenerate = False

    def ratio(num: int, den: int) -> float:
        nonlocal degenerate
        if den == 0:
            degenerate = True
            return 0.0
        return num / den

    accuracy = (cm.tp + cm.tn) / cm.total
    precision = ratio(cm.tp, cm.tp + cm.fp)
    recall = ratio(cm.tp, cm.tp + cm.fn)
    f1 = ratio_f1(precision, recall)
    if f1 is None:
        degenerate = True
        f1 = 0.0
    return {
        "accuracy": accuracy,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "degenerate": degenerate,
    }


def ratio_f1(precision: float, recall: float) -> float | None:
    if precision + recall == 0:
        return None
    return 2.0 * precision * recall / (precision + recall)


def averaged_metrics(matrices: list[ConfusionMatrix]) -> dict:
    """Macro (unweighted mean of per-class scores) and micro (summed counts)."""
    if not matrices:
        raise DataError("averaged_metrics needs at least one class matrix")
    per_class = [scalar_metrics(cm) for cm in matrices]
    macro = {
        key: float(np.mean([m[key] for m in per_class]))
        for key in ("precision", "recall", "f1")
    }
    total = matrices[0]
    for cm in matrices[1:]:
        total = total + cm
    micro_all = scalar_metrics(total)
    micro = {key: micro_all[key] for key in ("precision", "recall", "f1")}
    return {"macro": macro, "micro": micro}


def per_class_matrices(predictions, truths) -> list[ConfusionMatrix]:
    """One-vs-rest matrices for [attack, normal], in that order."""
    cm_attack = confusion(predictions, truths)
    # Swapping the positive class mirrors the counts.
    cm_normal = ConfusionMatrix(
        tp=cm_attack.tn, fp=cm_attack.fn, fn=cm_attack.fp, tn=cm_attack.tp
    )
    return [cm_attack, cm_normal]


def roc_auc(scores, truths) -> RocCurve:
    """ROC over descending distinct score thresholds, AUC by trapezoid rule.

    Higher score must mean more anomalous. Tied scores move the sweep in a
    single step so the curve never zigzags inside a tie group.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truths = list(truths)
    if scores.ndim != 1 or len(truths) != scores.size:
        raise ValueError("scores and truths must be equal-length 1D sequences")
    is_pos = np.array([t == POSITIVE for t in truths])
    bad = [t for t in truths if t not in (POSITIVE, NEGATIVE)]
    if bad:
        raise DataError(f"ground truth {bad[0]!r} is not attack/normal")
    n_pos = int(is_pos.sum())
    n_neg = is_pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC needs both classes present")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = is_pos[order]

    points = [(0.0, 0.0)]
    thresholds = [float("inf")]
    tp = fp = 0
    i = 0
    while i < sorted_scores.size:
        j = i
        while j < sorted_scores.size and sorted_scores[j] == sorted_scores[i]:
            j += 1
        tp += int(sorted_pos[i:j].sum())
        fp += (j - i) - int(sorted_pos[i:j].sum())
        points.append((fp / n_neg, tp / n_pos))
        thresholds.append(float(sorted_scores[i]))
        i = j
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
        thresholds.append(float("-inf"))

    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points=tuple(points), thresholds=tuple(thresholds), auc=float(auc))
