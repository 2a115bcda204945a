"""Confusion-derived metrics, ROC/AUC and Spearman similarity analysis."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, DegenerateInputError, ShapeError
from .signal_model import CLASS_COUNT, LabelClass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _as_labels(seq) -> np.ndarray:
    return np.array([int(LabelClass(v)) for v in seq], dtype=np.int64)


def confusion_counts(predictions, labels, positive: LabelClass) -> ConfusionCounts:
    pred = _as_labels(predictions)
    true = _as_labels(labels)
    if pred.shape != true.shape:
        raise ShapeError(f"{len(pred)} predictions vs {len(true)} labels")
    if pred.size == 0:
        raise DataError("cannot count an empty evaluation set")
    pos = int(positive)
    p, t = pred == pos, true == pos
    return ConfusionCounts(
        tp=int(np.sum(p & t)),
        fp=int(np.sum(p & ~t)),
        tn=int(np.sum(~p & ~t)),
        fn=int(np.sum(~p & t)),
    )


def _ratio(num: int, den: int) -> tuple[float, bool]:
    return (num / den, False) if den else (0.0, True)


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    tpr: float
    fpr: float
    support: int
    counts: ConfusionCounts
    degenerate_precision: bool = False
    auc: float | None = None


@dataclass
class MetricsReport:
    accuracy: float
    per_class: dict[LabelClass, ClassMetrics]
    weighted: dict[str, float]
    macro: dict[str, float]
    micro_auc: float | None = None
    degenerate: list[str] = field(default_factory=list)

    def headline(self) -> dict[str, float | None]:
        """The comparison-table row: accuracy plus support-weighted P/R/F1 and micro AUC."""
        return {
            "accuracy": self.accuracy,
            "precision": self.weighted["precision"],
            "recall": self.weighted["recall"],
            "f1": self.weighted["f1"],
            "auc": self.micro_auc,
        }

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "weighted": self.weighted,
            "macro": self.macro,
            "micro_auc": self.micro_auc,
            "degenerate": self.degenerate,
            "per_class": {
                cls.key: {
                    "precision": m.precision, "recall": m.recall, "f1": m.f1,
                    "tpr": m.tpr, "fpr": m.fpr, "support": m.support, "auc": m.auc,
                    "tp": m.counts.tp, "fp": m.counts.fp, "tn": m.counts.tn, "fn": m.counts.fn,
                    "degenerate_precision": m.degenerate_precision,
                }
                for cls, m in self.per_class.items()
            },
        }


def classification_metrics(predictions, labels, scores=None) -> MetricsReport:
    """Per-class and aggregated metrics.

    ``scores`` ([n, 4] class probabilities) is optional; when given, per-class
    one-vs-rest AUC and the micro-averaged AUC are filled in.
    """
    pred = _as_labels(predictions)
    true = _as_labels(labels)
    if pred.shape != true.shape:
        raise ShapeError(f"{len(pred)} predictions vs {len(true)} labels")
    if pred.size == 0:
        raise DataError("cannot evaluate an empty set")
    per_class = {}
    degenerate = []
    for cls in LabelClass:
        cc = confusion_counts(pred, true, cls)
        precision, bad_p = _ratio(cc.tp, cc.tp + cc.fp)
        recall, bad_r = _ratio(cc.tp, cc.tp + cc.fn)
        fpr, _ = _ratio(cc.fp, cc.fp + cc.tn)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        if bad_p:
            degenerate.append(f"{cls.key}:precision")
        if bad_r:
            degenerate.append(f"{cls.key}:recall")
        per_class[cls] = ClassMetrics(precision, recall, f1, recall, fpr,
                                      cc.tp + cc.fn, cc, degenerate_precision=bad_p)

    n = pred.size
    weighted = {
        key: sum(getattr(m, key) * m.support for m in per_class.values()) / n
        for key in ("precision", "recall", "f1")
    }
    macro = {
        key: float(np.mean([getattr(m, key) for m in per_class.values()]))
        for key in ("precision", "recall", "f1")
    }
    report = MetricsReport(float(np.mean(pred == true)), per_class, weighted, macro,
                           degenerate=degenerate)

    if scores is not None:
        S = np.asarray(scores, dtype=np.float64)
        if S.shape != (n, CLASS_COUNT):
            raise ShapeError(f"scores must be [{n}, {CLASS_COUNT}], got {S.shape}")
        for cls, m in per_class.items():
            pos = true == int(cls)
            if pos.any() and (~pos).any():
                m.auc = auc(roc_curve(S[:, int(cls)], pos))
        onehot = np.eye(CLASS_COUNT, dtype=bool)[true]
        report.micro_auc = auc(roc_curve(S.ravel(), onehot.ravel()))
    return report


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # +inf for the (0, 0) point

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _positive_mask(labels, positive) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.dtype == bool:
        return arr
    if positive is None:
        raise DataError("positive class required for non-boolean labels")
    return _as_labels(arr) == int(positive)


def roc_curve(scores, labels, positive: LabelClass | None = None) -> RocCurve:
    """One ROC point per distinct score, swept from +inf downwards.

    ``labels`` is either a boolean positive mask or a class sequence paired
    with ``positive``.
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = _positive_mask(labels, positive)
    if s.shape != pos.shape or s.ndim != 1:
        raise ShapeError("scores and labels must be equal-length 1-D sequences")
    P, N = int(pos.sum()), int((~pos).sum())
    if P == 0 or N == 0:
        raise DegenerateInputError("ROC needs at least one positive and one negative example")
    order = np.argsort(-s, kind="stable")
    s_sorted, pos_sorted = s[order], pos[order]
    tp = np.cumsum(pos_sorted)
    fp = np.cumsum(~pos_sorted)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    return RocCurve(
        fpr=np.r_[0.0, fp[ends] / N],
        tpr=np.r_[0.0, tp[ends] / P],
        thresholds=np.r_[np.inf, s_sorted[ends]],
    )


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    dx = np.diff(curve.fpr)
    return float(np.sum(dx * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))


def pair_counting_auc(scores, labels, positive: LabelClass | None = None) -> float:
    """Mann-Whitney statistic: P(score_pos > score_neg) + 0.5 P(tie), by brute force."""
    s = np.asarray(scores, dtype=np.float64)
    pos = _positive_mask(labels, positive)
    sp, sn = s[pos], s[~pos]
    if sp.size == 0 or sn.size == 0:
        raise DegenerateInputError("need at least one positive and one negative example")
    wins = 0.0
    for a in sp:
        wins += np.sum(a > sn) + 0.5 * np.sum(a == sn)
    return float(wins / (sp.size * sn.size))


def midranks(x) -> np.ndarray:
    """1-based ranks with ties given the average of the positions they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(x.size)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Pearson correlation of mid-ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError("spearman needs two equal-length 1-D sequences")
    if x.size < 2:
        raise DataError("spearman needs at least two observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInputError("spearman is undefined for a constant input")
    rx = midranks(x) - (x.size + 1) / 2.0
    ry = midranks(y) - (y.size + 1) / 2.0
    r = float(np.dot(rx, ry) / np.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))
    return min(1.0, max(-1.0, r))


@dataclass
class SimilarityMatrix:
    matrix: np.ndarray  # [4, 4] mean Spearman per class pair

    @property
    def self_similarity(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    @property
    def cross_similarity(self) -> np.ndarray:
        off = ~np.eye(len(self.matrix), dtype=bool)
        return np.array([self.matrix[i][off[i]].mean() for i in range(len(self.matrix))])

    def rows(self) -> list[dict]:
        """Table layout: one row per class, four class columns plus Self and Cross."""
        out = []
        self_, cross = self.self_similarity, self.cross_similarity
        for cls in LabelClass:
            row = {"class": cls.key}
            for other in LabelClass:
                row[other.key] = float(self.matrix[cls, other])
            row["self"] = float(self_[cls])
            row["cross"] = float(cross[cls])
            out.append(row)
        return out


SIMILARITY_COLUMNS = ["class"] + [c.key for c in LabelClass] + ["self", "cross"]


def similarity_matrix(sessions: Sequence, samples_per_pair: int, seed: int) -> SimilarityMatrix:
    """Mean Spearman correlation between sampled session pairs for every class pair.

    Each unordered class pair is sampled once (so the matrix is exactly
    symmetric); diagonal pairs always use two distinct sessions.
    """
    if samples_per_pair < 1:
        raise DataError("samples_per_pair must be >= 1")
    by_class = {cls: [] for cls in LabelClass}
    for s in sessions:
        by_class[s.label].append(np.asarray(s.values))
    for cls, group in by_class.items():
        if len(group) < 2:
            raise DataError(f"class {cls.key} has {len(group)} sessions; at least 2 required")

    rng = np.random.default_rng(seed)
    K = len(LabelClass)
    M = np.zeros((K, K))
    for a in range(K):
        for b in range(a, K):
            ga, gb = by_class[LabelClass(a)], by_class[LabelClass(b)]
            vals = []
            for _ in range(samples_per_pair):
                if a == b:
                    i, j = rng.choice(len(ga), size=2, replace=False)
                else:
                    i, j = rng.integers(len(ga)), rng.integers(len(gb))
                vals.append(spearman(ga[i], gb[j]))
            M[a, b] = M[b, a] = float(np.mean(vals))
    return SimilarityMatrix(M)
