"""
Corrective refinement stage.

For every image and class of a batch: confidence map, top-k references inside the
annotation, similarity map, weight maps and the weighted loss. Classes without
annotated pixels in an image, at full or embedding resolution, are skipped for that
image. Weight maps are computed from detached predictions; gradients flow only
through the loss's probability term.
"""

from __future__ import annotations

import logging

import numpy as np
import torch
from torch import Tensor
from torch.utils.data import Dataset

from mocl_seg.core.errors import DegenerateWeightsError, EmptyAnnotationError, RefinementError
from mocl_seg.core.mocl.loss import mocl_loss
from mocl_seg.core.mocl.maps import (
    Aggregation,
    confidence_map,
    select_topk,
    similarity_map,
    weight_maps,
)
from mocl_seg.core.model.config import Hyperparams
from mocl_seg.core.model.state import ModelState
from mocl_seg.core.model.training import TrainingHistory, train_adapter

logger = logging.getLogger(__name__)

DEFAULT_K = 64
DEFAULT_EPS_FLOOR = 0.05


class MoclObjective:
    """Loss handle for train_adapter; accumulates weight statistics per epoch."""

    def __init__(
        self,
        k: int = DEFAULT_K,
        eps_floor: float = DEFAULT_EPS_FLOOR,
        aggregation: Aggregation | str = Aggregation.MEAN_COSINE,
        class_names: list[str] | None = None,
    ) -> None:
        self.k = k
        self.eps_floor = eps_floor
        self.aggregation = Aggregation(aggregation)
        self.class_names = class_names or []
        self._reset()

    def _reset(self) -> None:
        self._fg_sum = 0.0
        self._fg_count = 0
        self._bg_sum = 0.0
        self._bg_count = 0
        self._used = 0
        self._skipped = 0

    def pop_epoch_stats(self) -> dict[str, float]:
        stats = {
            "omega_fg_mean": self._fg_sum / self._fg_count if self._fg_count else 0.0,
            "omega_bg_mean": self._bg_sum / self._bg_count if self._bg_count else 0.0,
            "maps_used": float(self._used),
            "maps_skipped": float(self._skipped),
        }
        self._reset()
        return stats

    def _name(self, c: int) -> str:
        return self.class_names[c] if c < len(self.class_names) else str(c)

    def __call__(self, prob: Tensor, embeddings: Tensor, target: Tensor) -> Tensor:
        prob_np = prob.detach().permute(0, 2, 3, 1).cpu().double().numpy()
        emb_np = embeddings.detach().permute(0, 2, 3, 1).cpu().double().numpy()
        target_np = target.detach().cpu().numpy() > 0.5

        losses: list[Tensor] = []
        for b in range(prob.shape[0]):
            for c in range(prob.shape[1]):
                y = target_np[b, c]
                if not y.any():
                    self._skipped += 1
                    continue
                conf = confidence_map(prob_np[b], c)
                try:
                    sel = select_topk(emb_np[b], conf, y, self.k, class_name=self._name(c))
                except EmptyAnnotationError:
                    # annotation vanished on the embedding grid
                    self._skipped += 1
                    continue
                sim = similarity_map(
                    emb_np[b], sel, out_shape=y.shape, aggregation=self.aggregation
                )
                wm = weight_maps(conf, sim, y, self.eps_floor)
                omega = wm.omega
                try:
                    losses.append(mocl_loss(target[b, c], prob[b, c], omega))
                except DegenerateWeightsError:
                    self._skipped += 1
                    continue
                self._used += 1
                self._fg_sum += float(omega[y].sum())
                self._fg_count += int(y.sum())
                self._bg_sum += float(omega[~y].sum())
                self._bg_count += int((~y).sum())

        if not losses:
            return prob.sum() * 0.0
        return torch.stack(losses).mean()


def refine(
    state: ModelState,
    train_data: Dataset[dict[str, Tensor]],
    val_data: Dataset[dict[str, Tensor]] | None,
    hp: Hyperparams,
    k: int = DEFAULT_K,
    eps_floor: float = DEFAULT_EPS_FLOOR,
    aggregation: Aggregation | str = Aggregation.MEAN_COSINE,
) -> tuple[ModelState, TrainingHistory]:
    """
    Refine an adapter-trained model with the corrective loss.

    The incoming weights are the epoch-0 candidate for the best-Dice restore.

    Raises:
        RefinementError: no training image has an annotated pixel for any class
    """
    usable = 0
    for index in range(len(train_data)):  # type: ignore[arg-type]
        if bool(np.asarray(train_data[index]["target"]).any()):
            usable += 1
    if usable == 0:
        raise RefinementError("every training image lacks annotations; nothing to refine")

    objective = MoclObjective(k, eps_floor, aggregation, state.class_names)
    logger.info(
        "refining",
        extra={
            "k": k,
            "eps_floor": eps_floor,
            "aggregation": objective.aggregation.value,
            "usable_images": usable,
        },
    )
    return train_adapter(
        state, train_data, val_data, hp, objective, include_initial=True, stage="refine"
    )
