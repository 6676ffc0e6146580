"""
Prompt-free inference.

Images of exactly input_size are predicted in one pass. Larger images are cut into
input_size tiles with stride input_size // 2 (edge-anchored) and probabilities and
embeddings are averaged over overlaps.
"""

from __future__ import annotations

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from mocl_seg.core.data.tiling import crop, stitch_average, tile_image
from mocl_seg.core.errors import ShapeError
from mocl_seg.core.model.dataset import prepare_inputs
from mocl_seg.core.model.state import ModelState


class PredictionOutput(BaseModel):
    """Per-class probabilities (H x W x C) and decoder embeddings (H' x W' x M)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    prob: np.ndarray = Field(description="H x W x C in [0, 1]")
    embeddings: np.ndarray = Field(description="H/2 x W/2 x M")

    @model_validator(mode="after")
    def _check(self) -> PredictionOutput:
        if self.prob.size and (self.prob.min() < 0.0 or self.prob.max() > 1.0):
            raise ValueError("probabilities outside [0, 1]")
        if not np.isfinite(self.embeddings).all():
            raise ValueError("non-finite embeddings")
        return self

    @property
    def num_classes(self) -> int:
        return int(self.prob.shape[2])


def _forward(state: ModelState, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    image_t, texture_t = prepare_inputs(image, state.config.adapter.texture_sigma)
    device = state.device
    with torch.no_grad():
        logits, embeddings = state.network(image_t[None].to(device), texture_t[None].to(device))
    prob = torch.sigmoid(logits)[0].permute(1, 2, 0).cpu().numpy()
    emb = embeddings[0].permute(1, 2, 0).cpu().numpy()
    return prob, emb


def predict(state: ModelState, image: np.ndarray) -> PredictionOutput:
    """
    Predict one H x W x 3 uint8 image.

    Raises:
        ShapeError: image not RGB, or smaller than the model input in either dimension
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"expected H x W x 3 image, got {image.shape}")
    size = state.config.encoder.input_size
    h, w = image.shape[:2]
    if h < size or w < size:
        raise ShapeError(f"image {h}x{w} smaller than model input {size}x{size}")

    state.network.eval()
    if (h, w) == (size, size):
        prob, emb = _forward(state, image)
        return PredictionOutput(prob=prob, embeddings=emb)

    tiles = tile_image(image, size, max(size // 2, 1))
    outputs = [(tile, _forward(state, crop(image, tile))) for tile in tiles]
    prob = stitch_average(((t, o[0]) for t, o in outputs), h, w)
    emb = stitch_average(((t, o[1]) for t, o in outputs), h, w, scale=2)
    if prob.shape[:2] != (h, w):
        raise ShapeError(f"stitched prediction {prob.shape[:2]} does not match image {(h, w)}")
    return PredictionOutput(
        prob=np.clip(prob, 0.0, 1.0).astype(np.float32), embeddings=emb.astype(np.float32)
    )
