"""Imbalance-aware evaluation metrics. Class 1 is the positive (minority) class."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UndefinedMetricError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.fp + self.tn

    def _rates(self) -> tuple[float, float]:
        if self.positives == 0 or self.negatives == 0:
            raise UndefinedMetricError(
                f"both classes must be present (positives={self.positives}, negatives={self.negatives})")
        return self.tp / self.positives, self.tn / self.negatives

    @property
    def tpr(self) -> float:
        return self._rates()[0]

    @property
    def tnr(self) -> float:
        return self._rates()[1]


@dataclass(frozen=True)
class ScoredPrediction:
    positive_score: float
    true_label: int


def confusion(predicted, actual) -> ConfusionMatrix:
    p = np.asarray(predicted).astype(np.int64).ravel()
    a = np.asarray(actual).astype(np.int64).ravel()
    if p.shape != a.shape:
        raise ShapeError(f"{len(p)} predictions for {len(a)} labels")
    pos = a == 1
    hit = p == 1
    return ConfusionMatrix(tp=int(np.sum(pos & hit)), fn=int(np.sum(pos & ~hit)),
                           fp=int(np.sum(~pos & hit)), tn=int(np.sum(~pos & ~hit)))


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.n == 0:
        raise UndefinedMetricError("accuracy of an empty confusion matrix")
    return (cm.tp + cm.tn) / cm.n


def gm(cm: ConfusionMatrix) -> float:
    """Geometric mean of the true positive and true negative rates."""
    tpr, tnr = cm._rates()
    return math.sqrt(tpr * tnr)


def auc_balanced(cm: ConfusionMatrix) -> float:
    """Single-operating-point ROC area, ``(TPR + TNR) / 2``."""
    tpr, tnr = cm._rates()
    return (tpr + tnr) / 2


def auroc(scores, labels=None) -> float:
    """Mann-Whitney estimate of the ROC area; tied pairs count one half.

    Takes either parallel ``scores``/``labels`` arrays or a single sequence
    of :class:`ScoredPrediction`.
    """
    if labels is None:
        scored = list(scores)
        scores = [p.positive_score for p in scored]
        labels = [p.true_label for p in scored]
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).astype(np.int64).ravel()
    if s.shape != y.shape:
        raise ShapeError(f"{len(s)} scores for {len(y)} labels")
    pos = s[y == 1]
    neg = np.sort(s[y != 1])
    if len(pos) == 0 or len(neg) == 0:
        raise UndefinedMetricError("ROC area needs both classes")
    below = np.searchsorted(neg, pos, side="left")
    not_above = np.searchsorted(neg, pos, side="right")
    wins = 2 * int(below.sum()) + int((not_above - below).sum())
    return wins / (2 * len(pos) * len(neg))


def evaluate(predicted, actual, positive_scores=None) -> dict:
    """All report metrics for one set of predictions."""
    cm = confusion(predicted, actual)
    row = {"gm": gm(cm), "auc_balanced": auc_balanced(cm), "accuracy": accuracy(cm)}
    row["auroc"] = auroc(positive_scores, actual) if positive_scores is not None else float("nan")
    return row
