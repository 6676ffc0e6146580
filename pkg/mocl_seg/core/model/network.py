"""
Adapter segmentation network.

A plain pre-norm vision transformer (the frozen backbone) with bottleneck adapters
after the attention and feed-forward sublayers of the inject blocks, a texture map
projected onto the patch grid before every inject block, and a small upsampling
decoder producing an M-channel embedding map at H/2 and per-class logits at H.

Adapter up-projections and texture projections start at zero, so a fresh network
computes exactly what the adapter-free backbone computes.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from mocl_seg.core.model.config import ModelConfig, validate_model_config

BACKBONE_PREFIXES = ("patch_embed.", "pos_embed", "blocks.", "norm.")


class Adapter(nn.Module):
    """down -> GELU -> up, added to its input."""

    def __init__(self, dim: int, bottleneck: int) -> None:
        super().__init__()
        self.down = nn.Linear(dim, bottleneck)
        self.act = nn.GELU()
        self.up = nn.Linear(bottleneck, dim)
        nn.init.zeros_(self.up.weight)
        nn.init.zeros_(self.up.bias)

    def forward(self, x: Tensor) -> Tensor:
        return x + self.up(self.act(self.down(x)))


class Block(nn.Module):
    """Pre-norm transformer block with its two sublayers exposed."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def attention_sublayer(self, x: Tensor) -> Tensor:
        h = self.norm1(x)
        out, _ = self.attn(h, h, h, need_weights=False)
        return x + out

    def mlp_sublayer(self, x: Tensor) -> Tensor:
        return x + self.mlp(self.norm2(x))

    def forward(self, x: Tensor) -> Tensor:
        return self.mlp_sublayer(self.attention_sublayer(x))


class AdapterSegmenter(nn.Module):
    """Frozen ViT backbone + adapters + texture injection + decoder."""

    def __init__(self, config: ModelConfig, num_classes: int) -> None:
        super().__init__()
        validate_model_config(config.encoder, config.adapter)
        enc = config.encoder
        self.config = config
        self.num_classes = num_classes
        self.inject_blocks = config.adapter.resolved_blocks(enc.depth)
        dim = enc.embed_dim

        # backbone
        self.patch_embed = nn.Conv2d(3, dim, kernel_size=enc.patch_size, stride=enc.patch_size)
        self.pos_embed = nn.Parameter(torch.zeros(1, enc.grid_size**2, dim))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(
            Block(dim, enc.num_heads, enc.mlp_ratio) for _ in range(enc.depth)
        )
        self.norm = nn.LayerNorm(dim)

        # adapters
        self.adapters = nn.ModuleDict()
        self.texture_proj = nn.ModuleDict()
        for b in self.inject_blocks:
            self.adapters[f"{b}_attn"] = Adapter(dim, config.adapter.bottleneck_dim)
            self.adapters[f"{b}_mlp"] = Adapter(dim, config.adapter.bottleneck_dim)
            proj = nn.Conv2d(1, dim, kernel_size=enc.patch_size, stride=enc.patch_size)
            nn.init.zeros_(proj.weight)
            nn.init.zeros_(proj.bias)
            self.texture_proj[str(b)] = proj

        # decoder: grid (H/p) -> H/2
        ch = config.decoder_channels
        stages: list[nn.Module] = [nn.Conv2d(dim, ch, kernel_size=1), nn.GELU()]
        for _ in range(int(math.log2(enc.patch_size)) - 1):
            stages += [nn.ConvTranspose2d(ch, ch, kernel_size=2, stride=2), nn.GELU()]
        self.decoder = nn.Sequential(*stages)
        self.skip = nn.Conv2d(4, ch, kernel_size=3, stride=2, padding=1)
        self.embed_head = nn.Conv2d(ch, config.embed_channels, kernel_size=1)
        self.class_head = nn.Conv2d(config.embed_channels, num_classes, kernel_size=1)

        self.freeze_backbone()

    def freeze_backbone(self) -> None:
        for name, param in self.named_parameters():
            param.requires_grad = not is_backbone_param(name)

    def encode(self, image: Tensor, texture: Tensor, use_adapters: bool = True) -> Tensor:
        """Token features (B, N, D) from the backbone, adapted when use_adapters."""
        tokens = self.patch_embed(image).flatten(2).transpose(1, 2) + self.pos_embed
        for index, block in enumerate(self.blocks):
            inject = use_adapters and index in self.inject_blocks
            if inject:
                tex = self.texture_proj[str(index)](texture).flatten(2).transpose(1, 2)
                tokens = tokens + tex
            tokens = block.attention_sublayer(tokens)
            if inject:
                tokens = self.adapters[f"{index}_attn"](tokens)
            tokens = block.mlp_sublayer(tokens)
            if inject:
                tokens = self.adapters[f"{index}_mlp"](tokens)
        return self.norm(tokens)

    def forward(
        self, image: Tensor, texture: Tensor, use_adapters: bool = True
    ) -> tuple[Tensor, Tensor]:
        """
        Args:
            image: (B, 3, S, S) in [0, 1]
            texture: (B, 1, S, S) standardized texture map

        Returns:
            logits (B, C, S, S) and embeddings (B, M, S/2, S/2)
        """
        b, _, h, w = image.shape
        tokens = self.encode(image, texture, use_adapters=use_adapters)
        grid = self.config.encoder.grid_size
        features = tokens.transpose(1, 2).reshape(b, -1, grid, grid)
        features = self.decoder(features) + self.skip(torch.cat([image, texture], dim=1))
        embeddings = self.embed_head(features)
        logits = self.class_head(embeddings)
        logits = F.interpolate(logits, size=(h, w), mode="bilinear", align_corners=False)
        return logits, embeddings


def is_backbone_param(name: str) -> bool:
    return name.startswith(BACKBONE_PREFIXES)
