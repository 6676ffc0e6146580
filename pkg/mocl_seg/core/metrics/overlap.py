"""
Pixel-level metrics: Dice, IoU, precision, recall, ROC AUC and best F1.

Empty-vs-empty conventions: dice, iou, precision and recall are 1.0 when both
prediction and ground truth are empty.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from mocl_seg.core.errors import MetricShapeError, UndefinedMetricError


def _pair(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if pred.shape != gt.shape:
        raise MetricShapeError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return np.asarray(pred) > 0, np.asarray(gt) > 0


def dice(pred: np.ndarray, gt: np.ndarray) -> float:
    p, g = _pair(pred, gt)
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / total


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    p, g = _pair(pred, gt)
    union = int((p | g).sum())
    if union == 0:
        return 1.0
    return int((p & g).sum()) / union


def precision(pred: np.ndarray, gt: np.ndarray) -> float:
    """TP / |P|; an empty prediction scores 1.0 only against empty ground truth."""
    p, g = _pair(pred, gt)
    n_pred = int(p.sum())
    if n_pred == 0:
        return 1.0 if not g.any() else 0.0
    return int((p & g).sum()) / n_pred


def recall(pred: np.ndarray, gt: np.ndarray) -> float:
    """TP / |G|; empty ground truth scores 1.0 only against an empty prediction."""
    p, g = _pair(pred, gt)
    n_gt = int(g.sum())
    if n_gt == 0:
        return 1.0 if not p.any() else 0.0
    return int((p & g).sum()) / n_gt


def pixel_auc(prob: np.ndarray, gt: np.ndarray) -> float:
    """
    ROC AUC via the Mann-Whitney rank statistic with average ranks for ties.

    Raises:
        MetricShapeError: shape mismatch
        UndefinedMetricError: ground truth holds a single class
    """
    if prob.shape != gt.shape:
        raise MetricShapeError(f"shape mismatch: {prob.shape} vs {gt.shape}")
    labels = np.asarray(gt).ravel() > 0
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both foreground and background pixels")
    ranks = stats.rankdata(np.asarray(prob, dtype=np.float64).ravel(), method="average")
    u = float(ranks[labels].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def f1_at(prob: np.ndarray, gt: np.ndarray, threshold: float) -> float:
    """Pixel F1 of prob >= threshold; 0 when undefined."""
    p = np.asarray(prob) >= threshold
    g = np.asarray(gt) > 0
    tp = int((p & g).sum())
    denom = int(p.sum()) + int(g.sum())
    return 2.0 * tp / denom if denom else 0.0


def best_f1(prob: np.ndarray, gt: np.ndarray, step: float = 0.01) -> tuple[float, float]:
    """
    Best pixel F1 over thresholds step, 2*step, ..., <= 1 - step.

    Ties keep the lowest threshold. Empty ground truth gives (0.0, step).

    Raises:
        MetricShapeError: shape mismatch
        ValueError: step outside (0, 1)
    """
    if prob.shape != gt.shape:
        raise MetricShapeError(f"shape mismatch: {prob.shape} vs {gt.shape}")
    if not 0.0 < step < 1.0:
        raise ValueError(f"step must be in (0, 1), got {step}")
    thresholds = threshold_grid(step)
    if not np.asarray(gt).any():
        return 0.0, thresholds[0]

    best, best_t = -1.0, thresholds[0]
    for t in thresholds:
        score = f1_at(prob, gt, t)
        if score > best:
            best, best_t = score, t
    return best, best_t


def threshold_grid(step: float) -> list[float]:
    count = int(np.floor((1.0 - step) / step + 1e-9))
    return [round(i * step, 12) for i in range(1, count + 1)]
