"""Classification metrics: confusion matrix, macro F-score, per-class
true-positive rate (recall), and a squared-error measure between one-hot
truth and normalized decision scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class MetricsReport:
    """Metrics for one experiment cell.

    confusion[i, j] counts utterances of true class i predicted as j.
    tp_rate[c] is class c's recall; support[c] its true count. rmse is None
    when no decision scores were supplied.
    """

    confusion: np.ndarray
    macro_f: float
    tp_rate: np.ndarray
    support: np.ndarray
    rmse: float | None
    n: int

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "macro_f": self.macro_f,
            "tp_rate": self.tp_rate.tolist(),
            "support": self.support.tolist(),
            "rmse": self.rmse,
            "n": self.n,
        }


def normalized_scores(decisions: np.ndarray) -> np.ndarray:
    """Per-record softmax over decision values, giving comparable scores
    in [0, 1] that sum to 1."""
    z = decisions - decisions.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def compute_metrics(
    true_labels,
    predicted_labels,
    decisions: np.ndarray | None = None,
    n_classes: int | None = None,
) -> MetricsReport:
    """Count-based metrics over aligned label sequences.

    Macro F averages per-class F1 uniformly over all class indices below
    n_classes; a class with no true or predicted instances contributes 0.
    When per-class decision values are given, rmse is the root mean squared
    difference between the one-hot truth and the per-record softmax of the
    decisions.
    """
    t = np.asarray(true_labels, dtype=int)
    p = np.asarray(predicted_labels, dtype=int)
    if t.size == 0:
        raise DataError("empty label sequences")
    if t.shape != p.shape or t.ndim != 1:
        raise DataError(f"label sequences disagree: {t.shape} vs {p.shape}")
    if n_classes is None:
        n_classes = int(max(t.max(), p.max())) + 1
    if t.min() < 0 or p.min() < 0 or t.max() >= n_classes or p.max() >= n_classes:
        raise DataError(f"labels outside [0, {n_classes})")

    confusion = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(confusion, (t, p), 1)

    support = confusion.sum(axis=1)
    predicted_count = confusion.sum(axis=0)
    diag = np.diag(confusion).astype(float)

    f_scores = np.zeros(n_classes)
    tp_rate = np.zeros(n_classes)
    for c in range(n_classes):
        precision = diag[c] / predicted_count[c] if predicted_count[c] else 0.0
        recall = diag[c] / support[c] if support[c] else 0.0
        tp_rate[c] = recall
        if precision + recall > 0:
            f_scores[c] = 2 * precision * recall / (precision + recall)
    macro_f = float(f_scores.mean())

    rmse = None
    if decisions is not None:
        decisions = np.asarray(decisions, dtype=np.float64)
        if decisions.shape != (t.size, n_classes):
            raise DataError(
                f"decision array shape {decisions.shape} != ({t.size}, {n_classes})"
            )
        scores = normalized_scores(decisions)
        onehot = np.zeros_like(scores)
        onehot[np.arange(t.size), t] = 1.0
        rmse = float(np.sqrt(np.mean((onehot - scores) ** 2)))

    return MetricsReport(
        confusion=confusion,
        macro_f=macro_f,
        tp_rate=tp_rate,
        support=support,
        rmse=rmse,
        n=int(t.size),
    )
