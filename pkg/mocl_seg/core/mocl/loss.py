"""
Weighted compound loss.

With per-pixel weight Omega = omega_w * omega_s:

    dice = 1 - (2 sum(Omega p y) + 1) / (sum(Omega p) + sum(Omega y) + 1)
    bce  = sum(Omega bce(p, y)) / max(sum(Omega), 1)

Probabilities are clamped to [1e-7, 1 - 1e-7]. With Omega = 1 this is plain soft
Dice + mean BCE.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import Tensor

from mocl_seg.core.errors import DegenerateWeightsError, ValidationError
from mocl_seg.core.mocl.maps import WeightMaps
from mocl_seg.core.model.losses import PROB_EPS, soft_dice_loss, weighted_bce


def _as_tensor(value: Tensor | np.ndarray, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else torch.float64
    device = like.device if like is not None else None
    return torch.as_tensor(np.asarray(value), dtype=dtype, device=device)


def mocl_loss(
    Y: Tensor | np.ndarray,
    prob: Tensor | np.ndarray,
    wm: WeightMaps | Tensor | np.ndarray,
) -> Tensor:
    """
    Weighted soft Dice + weighted BCE for one class map.

    `wm` may be WeightMaps or a precomputed Omega array.

    Raises:
        ValidationError: shape mismatch
        DegenerateWeightsError: sum(Omega) == 0
    """
    p = _as_tensor(prob)
    y = _as_tensor(Y, like=p)
    omega_src = wm.omega if isinstance(wm, WeightMaps) else wm
    omega = _as_tensor(omega_src, like=p).detach()
    if not p.shape == y.shape == omega.shape:
        raise ValidationError(
            f"shape mismatch: prob {tuple(p.shape)}, Y {tuple(y.shape)}, "
            f"weights {tuple(omega.shape)}"
        )
    if float(omega.sum()) == 0.0:
        raise DegenerateWeightsError("weights sum to zero; use eps_floor > 0 or skip the class")

    p = p.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return soft_dice_loss(p, y, omega) + weighted_bce(p, y, omega)
