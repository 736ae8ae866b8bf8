"""Evaluation metrics for probabilistic binary predictions.

Classification everywhere uses ``prob > threshold`` as the positive rule.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class PredictionSet:
    probs: np.ndarray
    labels: np.ndarray

    def __init__(self, probs, labels):
        p = np.asarray(probs, dtype=np.float64).ravel()
        y = np.asarray(labels).ravel()
        if len(p) != len(y):
            raise ValueError("probs and labels differ in length")
        if len(p) and (p.min() < 0 or p.max() > 1 or np.isnan(p).any()):
            raise ValueError("probabilities must lie in [0, 1]")
        if len(y) and not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "labels", y.astype(np.int8))

    def __len__(self):
        return len(self.probs)

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return len(self) - self.n_pos


@dataclass(frozen=True)
class CostMatrix:
    """Misclassification costs; correct decisions cost nothing."""

    c10: float = 1.0  # false positive
    c01: float = 1.0  # false negative

    def __post_init__(self):
        if not (self.c10 > 0 and self.c01 > 0):
            raise ValueError("misclassification costs must exceed the zero cost of correct decisions")

    def total(self, fp, fn):
        return self.c10 * fp + self.c01 * fn


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def percentages(self) -> dict[str, float]:
        n = self.n
        return {k: 100.0 * getattr(self, k) / n for k in ("tp", "fp", "tn", "fn")}

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "percent": self.percentages()}


def _require_nonempty(preds: PredictionSet) -> None:
    if len(preds) == 0:
        raise ValueError("empty prediction set")


def rmse(preds: PredictionSet) -> float:
    _require_nonempty(preds)
    return float(np.sqrt(np.mean((preds.probs - preds.labels) ** 2)))


def accuracy_at(preds: PredictionSet, threshold: float) -> float:
    _require_nonempty(preds)
    return float(np.mean((preds.probs > threshold) == (preds.labels == 1)))


def confusion_at(preds: PredictionSet, threshold: float) -> ConfusionMatrix:
    pos = preds.probs > threshold
    y = preds.labels == 1
    return ConfusionMatrix(
        tp=int(np.sum(pos & y)), fp=int(np.sum(pos & ~y)),
        tn=int(np.sum(~pos & ~y)), fn=int(np.sum(~pos & y)),
    )


def candidate_thresholds(probs: np.ndarray) -> np.ndarray:
    """0, 1 and midpoints between adjacent distinct probabilities, ascending."""
    u = np.unique(probs)
    mids = (u[:-1] + u[1:]) / 2.0
    return np.unique(np.concatenate(([0.0], mids, [1.0])))


def _counts_at(preds: PredictionSet, thresholds: np.ndarray):
    """(tp, fp) for each threshold via one sort."""
    order = np.argsort(preds.probs, kind="mergesort")
    s = preds.probs[order]
    y = preds.labels[order].astype(np.int64)
    pos_above = np.concatenate((np.cumsum(y[::-1])[::-1], [0]))
    idx = np.searchsorted(s, thresholds, side="right")
    tp = pos_above[idx]
    fp = (len(s) - idx) - tp
    return tp, fp


def best_accuracy_threshold(preds: PredictionSet) -> tuple[float, float]:
    """Accuracy-maximizing threshold; ties go to the larger threshold."""
    _require_nonempty(preds)
    t = candidate_thresholds(preds.probs)
    tp, fp = _counts_at(preds, t)
    correct = tp + (preds.n_neg - fp)
    best = len(t) - 1 - int(np.argmax(correct[::-1]))
    return float(t[best]), float(correct[best] / len(preds))


def mcnemar_chi2(correct_a: Sequence[bool], correct_b: Sequence[bool]) -> float:
    """Continuity-corrected McNemar statistic (chi-square, 1 dof)."""
    a = np.asarray(correct_a, dtype=bool)
    b = np.asarray(correct_b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("correctness vectors differ in length")
    n01 = int(np.sum(a & ~b))
    n10 = int(np.sum(~a & b))
    if n01 + n10 == 0:
        return 0.0
    return (abs(n01 - n10) - 1) ** 2 / (n01 + n10)


MCNEMAR_CRITICAL_05 = 3.84


def _ranked_counts(preds: PredictionSet):
    """Cumulative (tp, fp) after each distinct score, descending."""
    order = np.argsort(-preds.probs, kind="mergesort")
    s = preds.probs[order]
    y = preds.labels[order].astype(np.int64)
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return np.r_[0, tp], np.r_[0, fp], s[last]


def _require_both_classes(preds: PredictionSet) -> None:
    if preds.n_pos == 0 or preds.n_neg == 0:
        raise ValueError("ROC analysis needs both positive and negative labels")


def roc_points(preds: PredictionSet) -> np.ndarray:
    """Array of (fpr, tpr) rows from (0, 0) to (1, 1)."""
    _require_both_classes(preds)
    tp, fp, _ = _ranked_counts(preds)
    return np.column_stack((fp / preds.n_neg, tp / preds.n_pos))


def auc_roc_trapezoid(preds: PredictionSet) -> float:
    pts = roc_points(preds)
    x, y = pts[:, 0], pts[:, 1]
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def auc_roc_rank(preds: PredictionSet) -> float:
    """Mann-Whitney form: P(score_pos > score_neg) + 0.5 P(equal)."""
    _require_both_classes(preds)
    ranks = rankdata(preds.probs)
    npos, nneg = preds.n_pos, preds.n_neg
    u = ranks[preds.labels == 1].sum() - npos * (npos + 1) / 2.0
    return float(u / (npos * nneg))


def auc_roc(preds: PredictionSet) -> float:
    area = auc_roc_trapezoid(preds)
    rank = auc_roc_rank(preds)
    if abs(area - rank) > 1e-12:
        raise ArithmeticError(f"ROC area {area!r} disagrees with rank statistic {rank!r}")
    return area


def pr_points(preds: PredictionSet) -> np.ndarray:
    """Achievable (recall, precision) rows, thresholds descending."""
    if preds.n_pos == 0:
        raise ValueError("precision-recall analysis needs at least one positive")
    tp, fp, _ = _ranked_counts(preds)
    tp, fp = tp[1:], fp[1:]
    return np.column_stack((tp / preds.n_pos, tp / (tp + fp)))


def _pr_segment_area(tp_a, fp_a, tp_b, fp_b) -> float:
    """Integral of precision d(TP) along the segment, FP linear in TP."""
    dtp = tp_b - tp_a
    if dtp == 0:
        return 0.0
    skew = (fp_b - fp_a) / dtp
    # precision(t) = t / (a + b t) for t in [tp_a, tp_b]
    b = 1.0 + skew
    a = fp_a - skew * tp_a
    if a == 0.0:
        return dtp / b
    return dtp / b - (a / (b * b)) * math.log((a + b * tp_b) / (a + b * tp_a))


def auc_pr(preds: PredictionSet) -> float:
    """Area under the PR curve, interpolating FP linearly in TP between points."""
    if preds.n_pos == 0:
        raise ValueError("precision-recall analysis needs at least one positive")
    tp, fp, _ = _ranked_counts(preds)
    area = 0.0
    for k in range(1, len(tp)):
        area += _pr_segment_area(float(tp[k - 1]), float(fp[k - 1]), float(tp[k]), float(fp[k]))
    return area / preds.n_pos


@dataclass(frozen=True)
class ReliabilityBin:
    index: int
    lower: float
    upper: float
    count: int
    mean_pred: float | None
    frac_pos: float | None


def reliability_bins(preds: PredictionSet, n_bins: int = 10) -> list[ReliabilityBin]:
    """Equal-width bins; the last bin is closed at 1. Empty bins carry ``None`` means."""
    idx = np.minimum((preds.probs * n_bins).astype(np.int64), n_bins - 1)
    rows = []
    for b in range(n_bins):
        mask = idx == b
        c = int(mask.sum())
        rows.append(ReliabilityBin(
            b + 1, b / n_bins, (b + 1) / n_bins, c,
            float(preds.probs[mask].mean()) if c else None,
            float(preds.labels[mask].mean()) if c else None,
        ))
    return rows


def reliability_deviation(bins: Sequence[ReliabilityBin], weighted: bool = True) -> float:
    """Mean |mean_pred - frac_pos| over populated bins, count-weighted by default."""
    full = [b for b in bins if b.count]
    if weighted:
        return sum(b.count * abs(b.mean_pred - b.frac_pos) for b in full) / sum(b.count for b in full)
    return sum(abs(b.mean_pred - b.frac_pos) for b in full) / len(full)


def theoretical_threshold(costs: CostMatrix) -> float:
    return costs.c10 / (costs.c10 + costs.c01)


def cost_at(preds: PredictionSet, threshold: float, costs: CostMatrix) -> float:
    cm = confusion_at(preds, threshold)
    return float(costs.total(cm.fp, cm.fn))


def empirical_threshold(preds: PredictionSet, costs: CostMatrix) -> tuple[float, float]:
    """Cost-minimizing threshold over the exact candidate set; ties go to the larger one."""
    _require_nonempty(preds)
    t = candidate_thresholds(preds.probs)
    tp, fp = _counts_at(preds, t)
    fn = preds.n_pos - tp
    total = costs.c10 * fp + costs.c01 * fn
    best = len(t) - 1 - int(np.argmin(total[::-1]))
    return float(t[best]), float(total[best])


def wald_interval(p: float, n: int, z: float = 2.5758293035489004) -> tuple[float, float]:
    """Normal-approximation binomial interval; default z is the 99% quantile."""
    half = z * math.sqrt(p * (1.0 - p) / n)
    return p - half, p + half


def write_csv(fh: IO[str], header: Sequence[str], rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                    for v in row])


def roc_csv(fh: IO[str], preds: PredictionSet) -> None:
    write_csv(fh, ("fpr", "tpr"), roc_points(preds))


def pr_csv(fh: IO[str], preds: PredictionSet) -> None:
    write_csv(fh, ("recall", "precision"), pr_points(preds))


def reliability_csv(fh: IO[str], bins: Sequence[ReliabilityBin]) -> None:
    write_csv(fh, ("bin", "lower", "upper", "count", "mean_pred", "frac_pos"),
              [(b.index, b.lower, b.upper, b.count, b.mean_pred, b.frac_pos) for b in bins])
