"""FAR/FRR sweeps, equal error rate and AUC.

Convention: a higher score means "more likely the legitimate user"; a stroke is
accepted when score >= threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyScores


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray  # ascending, with -inf and +inf sentinels
    far: np.ndarray
    frr: np.ndarray
    n_pos: int
    n_neg: int


def compute_roc(pos_scores, neg_scores) -> RocCurve:
    pos = np.sort(np.asarray(pos_scores, dtype=float).ravel())
    neg = np.sort(np.asarray(neg_scores, dtype=float).ravel())
    if pos.size == 0 or neg.size == 0:
        raise EmptyScores("need at least one legitimate and one attack score")
    thr = np.concatenate(([-np.inf], np.unique(np.concatenate([pos, neg])), [np.inf]))
    frr = np.searchsorted(pos, thr, side="left") / pos.size
    far = (neg.size - np.searchsorted(neg, thr, side="left")) / neg.size
    return RocCurve(thr, far, frr, int(pos.size), int(neg.size))


def compute_eer(roc: RocCurve) -> float:
    """Error rate where FAR meets FRR, linearly interpolated between sampled thresholds."""
    d = roc.far - roc.frr
    exact = np.flatnonzero(d == 0)
    if exact.size:
        return float(roc.far[exact[0]])
    k = int(np.flatnonzero(d > 0)[-1])
    lam = d[k] / (d[k] - d[k + 1])
    far = roc.far[k] + lam * (roc.far[k + 1] - roc.far[k])
    frr = roc.frr[k] + lam * (roc.frr[k + 1] - roc.frr[k])
    return float((far + frr) / 2.0)


def eer(pos_scores, neg_scores) -> float:
    return compute_eer(compute_roc(pos_scores, neg_scores))


def eer_threshold(pos_scores, neg_scores) -> float:
    """A finite sampled threshold whose FAR and FRR are closest to each other."""
    roc = compute_roc(pos_scores, neg_scores)
    finite = np.isfinite(roc.thresholds)
    gap = np.where(finite, np.abs(roc.far - roc.frr), np.inf)
    return float(roc.thresholds[int(np.argmin(gap))])


def auc(pos_scores, neg_scores) -> float:
    """Probability that a legitimate score outranks an attack score (ties count half)."""
    pos = np.asarray(pos_scores, dtype=float).ravel()
    neg = np.asarray(neg_scores, dtype=float).ravel()
    if pos.size == 0 or neg.size == 0:
        raise EmptyScores("need at least one score of each class")
    ranks = rankdata(np.concatenate([pos, neg]))
    return float((ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0) / (pos.size * neg.size))
