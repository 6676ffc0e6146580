"""
Adapter training loop.

Only parameters with requires_grad (adapters, texture projections, decoder) are given
to the optimizer; the backbone never changes. The weights with the best validation
Dice are restored at the end (training Dice when there is no validation data).
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from typing import Any, Protocol, runtime_checkable

import torch
from pydantic import BaseModel, Field
from torch import Tensor
from torch.utils.data import DataLoader, Dataset

from mocl_seg.core.errors import TrainingError
from mocl_seg.core.model.config import Hyperparams
from mocl_seg.core.model.losses import dice_bce_loss
from mocl_seg.core.model.state import ModelState

logger = logging.getLogger(__name__)

LossFn = Callable[[Tensor, Tensor, Tensor], Tensor]
"""(prob (B,C,H,W), embeddings (B,M,h,w), target (B,C,H,W)) -> scalar."""


@runtime_checkable
class EpochStatsProvider(Protocol):
    """Loss objects that accumulate statistics over an epoch."""

    def pop_epoch_stats(self) -> dict[str, float]: ...


class EpochRecord(BaseModel, frozen=True):
    epoch: int
    train_loss: float | None = None
    val_loss: float | None = None
    val_dice: float
    stats: dict[str, float] = Field(default_factory=dict)


class TrainingHistory(BaseModel):
    """Per-epoch losses and validation Dice; epoch 0 is the untrained candidate."""

    epochs: list[EpochRecord] = Field(default_factory=list)
    best_epoch: int = 0
    best_val_dice: float = 0.0
    stopped_early: bool = False
    selection_split: str = "val"

    def to_json(self) -> dict[str, Any]:
        return self.model_dump(mode="json")


def make_loader(  # type: ignore[type-arg]
    data: Dataset[dict[str, Tensor]], hp: Hyperparams, shuffle: bool
) -> DataLoader:
    generator = torch.Generator()
    generator.manual_seed(hp.seed)
    return DataLoader(
        data, batch_size=hp.batch_size, shuffle=shuffle, generator=generator, num_workers=0
    )


def hard_dice(prob: Tensor, target: Tensor, threshold: float = 0.5) -> Tensor:
    """Per (image, class) Dice of thresholded predictions; both empty -> 1."""
    pred = (prob >= threshold).float()
    inter = (pred * target).sum(dim=(-2, -1))
    total = pred.sum(dim=(-2, -1)) + target.sum(dim=(-2, -1))
    return torch.where(total > 0, 2.0 * inter / total.clamp(min=1.0), torch.ones_like(total))


def evaluate_loader(
    state: ModelState, loader: DataLoader, loss_fn: LossFn | None = None  # type: ignore[type-arg]
) -> tuple[float | None, float]:
    """(mean loss, mean hard Dice) over a loader in eval mode."""
    network = state.network
    network.eval()
    device = state.device
    losses: list[float] = []
    dices: list[Tensor] = []
    with torch.no_grad():
        for batch in loader:
            image = batch["image"].to(device)
            texture = batch["texture"].to(device)
            target = batch["target"].to(device)
            logits, embeddings = network(image, texture)
            prob = torch.sigmoid(logits)
            if loss_fn is not None:
                losses.append(float(loss_fn(prob, embeddings, target)))
            dices.append(hard_dice(prob, target).flatten())
    if not dices:
        return None, 0.0
    mean_loss = sum(losses) / len(losses) if losses else None
    return mean_loss, float(torch.cat(dices).mean())


def train_adapter(
    state: ModelState,
    train_data: Dataset[dict[str, Tensor]],
    val_data: Dataset[dict[str, Tensor]] | None,
    hp: Hyperparams,
    loss: LossFn | None = None,
    *,
    include_initial: bool = False,
    stage: str = "train",
) -> tuple[ModelState, TrainingHistory]:
    """
    Fit adapters and decoder.

    Args:
        include_initial: treat the incoming weights as an epoch-0 candidate for the
            best-Dice restore, so the result never scores below the starting point

    Raises:
        TrainingError: empty training data, or a non-finite loss (with the epoch index)
    """
    if len(train_data) == 0:  # type: ignore[arg-type]
        raise TrainingError("training split is empty", epoch=0)

    loss_fn = loss or dice_bce_loss
    history = TrainingHistory()
    if hp.epochs == 0:
        return state, history

    torch.manual_seed(hp.seed)
    device = state.device
    network = state.network
    train_loader = make_loader(train_data, hp, shuffle=True)
    has_val = val_data is not None and len(val_data) > 0  # type: ignore[arg-type]
    select_data = val_data if has_val else train_data
    select_loader = make_loader(select_data, hp, shuffle=False)  # type: ignore[arg-type]
    history.selection_split = "val" if has_val else "train"

    params = list(state.trainable_parameters().values())
    optimizer = torch.optim.Adam(params, lr=hp.learning_rate, weight_decay=hp.weight_decay)

    best_weights = state.clone_weights()
    best_dice = -math.inf
    if include_initial:
        _, best_dice = evaluate_loader(state, select_loader)
        history.epochs.append(EpochRecord(epoch=0, val_dice=best_dice))
        if isinstance(loss_fn, EpochStatsProvider):
            loss_fn.pop_epoch_stats()

    since_best = 0
    for epoch in range(1, hp.epochs + 1):
        network.train()
        total, batches = 0.0, 0
        for batch in train_loader:
            image = batch["image"].to(device)
            texture = batch["texture"].to(device)
            target = batch["target"].to(device)
            logits, embeddings = network(image, texture)
            value = loss_fn(torch.sigmoid(logits), embeddings, target)
            if not torch.isfinite(value):
                raise TrainingError(f"loss is {float(value)}", epoch=epoch)
            optimizer.zero_grad()
            value.backward()
            optimizer.step()
            total += value.detach().item()
            batches += 1

        stats = loss_fn.pop_epoch_stats() if isinstance(loss_fn, EpochStatsProvider) else {}
        val_loss, val_dice = evaluate_loader(state, select_loader, loss_fn if has_val else None)
        if isinstance(loss_fn, EpochStatsProvider):
            loss_fn.pop_epoch_stats()
        record = EpochRecord(
            epoch=epoch,
            train_loss=total / max(batches, 1),
            val_loss=val_loss,
            val_dice=val_dice,
            stats=stats,
        )
        history.epochs.append(record)
        logger.info(
            f"{stage} epoch", extra={"stage": stage, **record.model_dump(exclude_none=True)}
        )

        if val_dice > best_dice:
            best_dice = val_dice
            best_weights = state.clone_weights()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= hp.patience:
                history.stopped_early = True
                break

    network.load_state_dict(best_weights)
    network.eval()
    history.best_val_dice = best_dice
    return state, history
