"""
Baseline segmentation losses on probabilities.
"""

from __future__ import annotations

import torch
from torch import Tensor

PROB_EPS = 1e-7
DICE_SMOOTH = 1.0


def soft_dice_loss(prob: Tensor, target: Tensor, weight: Tensor | None = None) -> Tensor:
    """1 - (2 sum(w p y) + 1) / (sum(w p) + sum(w y) + 1) over all elements."""
    w = torch.ones_like(prob) if weight is None else weight
    inter = (w * prob * target).sum()
    denom = (w * prob).sum() + (w * target).sum()
    return 1.0 - (2.0 * inter + DICE_SMOOTH) / (denom + DICE_SMOOTH)


def bce_map(prob: Tensor, target: Tensor) -> Tensor:
    p = prob.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -(target * torch.log(p) + (1.0 - target) * torch.log1p(-p))


def weighted_bce(prob: Tensor, target: Tensor, weight: Tensor | None = None) -> Tensor:
    """sum(w * bce) / max(sum(w), 1); unweighted this is the plain mean for > 1 element."""
    if weight is None:
        return bce_map(prob, target).mean()
    return (weight * bce_map(prob, target)).sum() / weight.sum().clamp(min=DICE_SMOOTH)


def dice_bce_loss(prob: Tensor, embeddings: Tensor, target: Tensor) -> Tensor:
    """Per-class soft Dice + BCE averaged over the batch and classes."""
    del embeddings
    losses = []
    for b in range(prob.shape[0]):
        for c in range(prob.shape[1]):
            p = prob[b, c].clamp(PROB_EPS, 1.0 - PROB_EPS)
            y = target[b, c]
            losses.append(soft_dice_loss(p, y) + weighted_bce(p, y))
    return torch.stack(losses).mean()
