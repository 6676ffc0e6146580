"""
Model and training configuration.

Defaults describe the desk-scale backbone (patch 8, dim 64, depth 4, heads 4,
input 128). A backbone checkpoint with a matching config switches in real weights.
"""

from __future__ import annotations

from pathlib import Path  # noqa: TC003

from pydantic import BaseModel, Field

from mocl_seg.core.errors import ModelConfigError


class EncoderConfig(BaseModel, frozen=True):
    """Vision transformer backbone shape."""

    patch_size: int = Field(default=8, gt=0)
    embed_dim: int = Field(default=64, gt=0)
    depth: int = Field(default=4, gt=0)
    num_heads: int = Field(default=4, gt=0)
    input_size: int = Field(default=128, gt=0)
    mlp_ratio: float = Field(default=4.0, gt=0)

    @property
    def grid_size(self) -> int:
        return self.input_size // self.patch_size


class AdapterConfig(BaseModel, frozen=True):
    """Adapter placement and texture injection."""

    bottleneck_dim: int = Field(default=16, gt=0)
    inject_blocks: list[int] | None = Field(
        default=None, description="Block indices; None means the last half of the blocks"
    )
    texture_sigma: float = Field(default=2.0, gt=0)

    def resolved_blocks(self, depth: int) -> list[int]:
        if self.inject_blocks is None:
            return list(range(depth // 2, depth))
        return sorted(set(self.inject_blocks))


class ModelConfig(BaseModel, frozen=True):
    """Everything needed to rebuild a network."""

    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    adapter: AdapterConfig = Field(default_factory=AdapterConfig)
    embed_channels: int = Field(default=32, gt=0, description="M, channels of the embedding map")
    decoder_channels: int = Field(default=32, gt=0)
    backbone_checkpoint: Path | None = None


class Hyperparams(BaseModel, frozen=True):
    """Optimization settings for adapter training and refinement."""

    batch_size: int = Field(default=4, gt=0)
    learning_rate: float = Field(default=1e-3, gt=0)
    epochs: int = Field(default=100, ge=0)
    patience: int = Field(default=20, ge=1)
    weight_decay: float = Field(default=0.0, ge=0)
    seed: int = 42


def validate_model_config(encoder: EncoderConfig, adapter: AdapterConfig) -> None:
    """
    Cross-field checks.

    Raises:
        ModelConfigError: on the first violated constraint
    """
    if encoder.input_size % encoder.patch_size:
        raise ModelConfigError(
            f"input_size {encoder.input_size} not divisible by patch_size {encoder.patch_size}"
        )
    if encoder.patch_size < 2 or encoder.patch_size & (encoder.patch_size - 1):
        raise ModelConfigError(f"patch_size must be a power of two >= 2, got {encoder.patch_size}")
    if encoder.embed_dim % encoder.num_heads:
        raise ModelConfigError(
            f"embed_dim {encoder.embed_dim} not divisible by num_heads {encoder.num_heads}"
        )
    if adapter.bottleneck_dim >= encoder.embed_dim:
        raise ModelConfigError(
            f"bottleneck_dim {adapter.bottleneck_dim} must be < embed_dim {encoder.embed_dim}"
        )
    blocks = adapter.resolved_blocks(encoder.depth)
    bad = [b for b in blocks if not 0 <= b < encoder.depth]
    if bad:
        raise ModelConfigError(f"inject_blocks {bad} outside [0, {encoder.depth})")
    if not blocks:
        raise ModelConfigError("no adapter blocks selected")
