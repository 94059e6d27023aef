"""Reconstruction metrics against clean labels, and threshold-based model metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata


def _count(q: float, m: int, rounder) -> int:
    # rounding to 9 decimals first absorbs binary representation error (0.07 * 100)
    return int(rounder(round(q * m, 9)))


def ceil_count(q: float, m: int) -> int:
    return _count(q, m, math.ceil)


def floor_count(q: float, m: int) -> int:
    return _count(q, m, math.floor)


@dataclass(frozen=True)
class ReconstructionMetrics:
    reconstruction_score: float
    fpr_r: Optional[float]
    fnr_r: Optional[float]
    fp: int
    fn: int
    tp: int
    tn: int
    per_group: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.fp + self.fn + self.tp + self.tn


def _rates(clean, corrected):
    fp = int(np.sum((clean == 0) & (corrected == 1)))
    tn = int(np.sum((clean == 0) & (corrected == 0)))
    fn = int(np.sum((clean == 1) & (corrected == 0)))
    tp = int(np.sum((clean == 1) & (corrected == 1)))
    fpr = fp / (fp + tn) if fp + tn else None
    fnr = fn / (fn + tp) if fn + tp else None
    return fp, tn, fn, tp, fpr, fnr


def reconstruction(clean, corrected, groups=None) -> ReconstructionMetrics:
    """Agreement of corrected labels with clean ones.

    A rate whose denominator is empty (e.g. FNR for a group without clean
    positives) is ``None`` rather than 0.  ``per_group`` maps each group to a
    dict with ``fpr_r``, ``fnr_r`` and the four counts.
    """
    clean = np.asarray(clean, dtype=np.int64)
    corrected = np.asarray(corrected, dtype=np.int64)
    if clean.shape != corrected.shape:
        raise ValueError("clean and corrected labels must align")
    if len(clean) == 0:
        raise ValueError("no labels to compare")
    fp, tn, fn, tp, fpr, fnr = _rates(clean, corrected)
    per_group = {}
    if groups is not None:
        groups = np.asarray(groups).astype(str)
        for g in sorted(np.unique(groups).tolist()):
            sel = groups == g
            gfp, gtn, gfn, gtp, gfpr, gfnr = _rates(clean[sel], corrected[sel])
            per_group[g] = {"fpr_r": gfpr, "fnr_r": gfnr, "fp": gfp, "tn": gtn, "fn": gfn, "tp": gtp}
    score = (tp + tn) / len(clean)
    return ReconstructionMetrics(score, fpr, fnr, fp, fn, tp, tn, per_group)


def top_fraction_threshold(scores, q: float):
    """Label the ``ceil(q * m)`` highest scores positive (ties: lower index first).

    Returns ``(threshold, labels)`` with the threshold being the k-th score.
    """
    scores = np.asarray(scores, dtype=np.float64)
    m = len(scores)
    if m < 1:
        raise ValueError("need at least one score")
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    k = min(m, max(1, ceil_count(q, m)))
    order = np.lexsort((np.arange(m), -scores))
    labels = np.zeros(m, dtype=np.int64)
    labels[order[:k]] = 1
    return float(scores[order[k - 1]]), labels


def tpr(pred, labels) -> float:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    pos = labels == 1
    if not pos.any():
        raise ValueError("TPR is undefined without positive labels")
    return float(np.sum(pred[pos] == 1) / np.sum(pos))


def predicted_prevalence(pred, groups) -> dict:
    pred = np.asarray(pred)
    groups = np.asarray(groups).astype(str)
    return {g: float(pred[groups == g].mean()) for g in sorted(np.unique(groups).tolist())}


def dp_ratio(pred, groups) -> float:
    """Lowest over highest per-group predicted prevalence; 1.0 if nobody is predicted positive."""
    pred = np.asarray(pred)
    groups = np.asarray(groups).astype(str)
    if len(pred) != len(groups):
        raise ValueError("pred and groups must align")
    if len(pred) == 0:
        raise ValueError("empty prediction vector")
    prev = list(predicted_prevalence(pred, groups).values())
    hi = max(prev)
    if hi == 0:
        return 1.0
    return min(prev) / hi


@dataclass(frozen=True)
class ModelMetrics:
    tpr: float
    dp_ratio: float
    threshold: float
    predicted_prevalence: dict


def model_metrics(scores, labels, groups, q: float = 0.01) -> ModelMetrics:
    threshold, pred = top_fraction_threshold(scores, q)
    return ModelMetrics(
        tpr=tpr(pred, labels),
        dp_ratio=dp_ratio(pred, groups),
        threshold=threshold,
        predicted_prevalence=predicted_prevalence(pred, groups),
    )


def roc_auc(y, scores) -> float:
    """Mann-Whitney AUC with mid-ranks, so tied scores count one half."""
    y = np.asarray(y, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
