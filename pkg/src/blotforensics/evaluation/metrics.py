"""Balanced accuracy, rank-based ROC AUC and best-threshold balanced accuracy."""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from ..core import ContractError


def confusion_matrix(y_true, y_pred, labels: Sequence) -> np.ndarray:
    """Rows are true labels, columns predicted labels, both in ``labels`` order."""
    index = {lbl: i for i, lbl in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(np.asarray(y_true, dtype=object), np.asarray(y_pred, dtype=object)):
        if t not in index:
            raise ContractError(f"true label {t!r} not among {list(labels)}")
        if p in index:
            cm[index[t], index[p]] += 1
    return cm


def balanced_accuracy(y_true, y_pred, labels: Sequence | None = None) -> float:
    """
    Mean per-class recall.

    :param labels: classes to average over; defaults to those present in
        ``y_true``.  A listed class without true samples is a contract error.
    """
    y_true = np.asarray(y_true, dtype=object)
    y_pred = np.asarray(y_pred, dtype=object)
    if y_true.size == 0 or y_true.shape != y_pred.shape:
        raise ContractError("y_true and y_pred must be nonempty and of equal length")
    classes = list(dict.fromkeys(y_true.tolist())) if labels is None else list(labels)
    recalls = []
    for c in classes:
        mask = y_true == c
        if not mask.any():
            raise ContractError(f"class {c!r} has no samples in y_true")
        recalls.append(float(np.mean(y_pred[mask] == c)))
    return float(np.mean(recalls))


def roc_auc(binary_labels, scores) -> float:
    """
    Area under the ROC curve via the Mann-Whitney rank statistic; tied
    positive/negative pairs count 1/2.
    """
    y = np.asarray(binary_labels).astype(bool)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ContractError("ROC AUC needs both positive and negative instances")
    if not np.all(np.isfinite(s)):
        raise ContractError("scores must be finite")
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_micro(y_true, scores, classes: Sequence) -> float:
    """
    Micro-averaged one-vs-all AUC: every (sample, class) pair becomes a binary
    instance labelled 1 when the class is the sample's true class and scored
    with that class's column of ``scores``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=object)
    if len(classes) < 2:
        raise ContractError("micro AUC needs at least two classes")
    if scores.shape != (y_true.size, len(classes)):
        raise ContractError(f"scores must have shape {(y_true.size, len(classes))}, got {scores.shape}")
    onehot = np.column_stack([y_true == c for c in classes])
    return roc_auc(onehot.ravel(), scores.ravel())


def best_threshold_bacc(scores, binary_labels) -> Tuple[float, float]:
    """
    Threshold (predict positive when ``score > threshold``) maximizing the
    balanced accuracy, scanning midpoints of sorted unique scores.  Ties go
    to the lower threshold.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(binary_labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ContractError("best-threshold Bacc needs both classes present")
    uniq = np.unique(s)
    if uniq.size < 2:
        return float(uniq[0]), 0.5
    mids = 0.5 * (uniq[:-1] + uniq[1:])
    pos_sorted = np.sort(s[y])
    neg_sorted = np.sort(s[~y])
    # positives above threshold / negatives at or below it
    tp = n_pos - np.searchsorted(pos_sorted, mids, side="right")
    tn = np.searchsorted(neg_sorted, mids, side="right")
    # 2 * n_pos * n_neg * Bacc as an exact integer, so ties resolve exactly
    score = tp.astype(np.int64) * n_neg + tn.astype(np.int64) * n_pos
    k = int(np.argmax(score))
    return float(mids[k]), float(0.5 * (tp[k] / n_pos + tn[k] / n_neg))
