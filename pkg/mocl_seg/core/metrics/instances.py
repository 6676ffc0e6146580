"""
Instance post-processing and instance-level metrics.

- instances_from_prob: threshold -> 8-connected components -> size filter -> hole fill
- aji: Aggregated Jaccard Index (Kumar et al. formulation)
- instance_f1: one-to-one greedy IoU matching
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from skimage import measure, segmentation

from mocl_seg.core.errors import MetricShapeError


def instances_from_prob(
    prob: np.ndarray, threshold: float = 0.5, min_size: int = 10, fill_holes: bool = True
) -> np.ndarray:
    """
    Instance label map from a probability map, labels 1..n in row-major discovery order.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    labels = measure.label(np.asarray(prob) >= threshold, connectivity=2)
    if labels.max() == 0:
        return labels.astype(np.int32)

    sizes = np.bincount(labels.ravel())
    small = sizes < min_size
    small[0] = False
    labels[small[labels]] = 0

    if fill_holes:
        for label, window in enumerate(ndimage.find_objects(labels), start=1):
            if window is None:
                continue
            region = labels[window]
            filled = ndimage.binary_fill_holes(region == label)
            region[filled & (region == 0)] = label

    relabeled, _, _ = segmentation.relabel_sequential(labels)
    return relabeled.astype(np.int32)


def _contingency(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Intersections (G+1 x P+1) and per-label areas; row/column 0 is background."""
    if pred.shape != gt.shape:
        raise MetricShapeError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    p = np.asarray(pred, dtype=np.int64).ravel()
    g = np.asarray(gt, dtype=np.int64).ravel()
    n_p = int(p.max(initial=0)) + 1
    n_g = int(g.max(initial=0)) + 1
    table = np.bincount(g * n_p + p, minlength=n_g * n_p).reshape(n_g, n_p)
    return table, table.sum(axis=1), table.sum(axis=0)


def iou_matrix(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """IoU between every GT label (rows) and predicted label (columns), background excluded."""
    table, gt_area, pred_area = _contingency(pred, gt)
    inter = table[1:, 1:].astype(np.float64)
    union = gt_area[1:, None] + pred_area[None, 1:] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def aji(pred: np.ndarray, gt: np.ndarray) -> float:
    """
    Aggregated Jaccard Index.

    Every GT instance takes the prediction with the highest IoU (lowest label on ties);
    matched intersections and unions are summed, and predictions never matched add
    their area to the union. Both maps empty give 1.0.
    """
    table, gt_area, pred_area = _contingency(pred, gt)
    present_gt = np.flatnonzero(gt_area[1:]) + 1
    present_pred = np.flatnonzero(pred_area[1:]) + 1
    if present_gt.size == 0 and present_pred.size == 0:
        return 1.0

    intersection = 0
    union = 0
    used: set[int] = set()
    for g in present_gt:
        inter = table[g, 1:].astype(np.float64)
        unions = gt_area[g] + pred_area[1:] - inter
        ious = np.divide(inter, unions, out=np.zeros_like(inter), where=unions > 0)
        j = int(np.argmax(ious)) + 1 if ious.size else 0
        if j == 0 or ious[j - 1] == 0.0:
            union += int(gt_area[g])
            continue
        intersection += int(table[g, j])
        union += int(gt_area[g] + pred_area[j] - table[g, j])
        used.add(j)
    union += sum(int(pred_area[j]) for j in present_pred if j not in used)
    return intersection / union if union else 0.0


def instance_f1(
    pred: np.ndarray, gt: np.ndarray, iou_thresh: float = 0.5
) -> tuple[float, float, float]:
    """
    (f1, precision, recall) from one-to-one matching in descending IoU order.

    A pair matches when IoU >= iou_thresh. Both maps empty give (1, 1, 1); undefined
    precision or recall otherwise count as 0.
    """
    if not 0.0 < iou_thresh < 1.0:
        raise ValueError(f"iou_thresh must be in (0, 1), got {iou_thresh}")
    _, gt_area, pred_area = _contingency(pred, gt)
    n_gt = int(np.count_nonzero(gt_area[1:]))
    n_pred = int(np.count_nonzero(pred_area[1:]))
    if n_gt == 0 and n_pred == 0:
        return 1.0, 1.0, 1.0

    ious = iou_matrix(pred, gt)
    rows, cols = np.nonzero(ious >= iou_thresh)
    # descending IoU, then lowest GT label, then lowest predicted label
    order = np.lexsort((cols, rows, -ious[rows, cols]))
    matched_gt: set[int] = set()
    matched_pred: set[int] = set()
    for i in order:
        r, c = int(rows[i]), int(cols[i])
        if r in matched_gt or c in matched_pred:
            continue
        matched_gt.add(r)
        matched_pred.add(c)

    tp = len(matched_gt)
    fp = n_pred - tp
    fn = n_gt - tp
    f1 = 2.0 * tp / (2 * tp + fp + fn)
    prec = tp / n_pred if n_pred else 0.0
    rec = tp / n_gt if n_gt else 0.0
    return f1, prec, rec
