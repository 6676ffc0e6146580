"""
Model state: network, configuration, class names and checkpoint I/O.

Checkpoint layout in a directory:
- checkpoint.pt: torch.save of {"backbone": ..., "adapters": ..., "decoder": ...} state dicts
- config.json: ModelConfig dump plus class names
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from pathlib import Path

import torch
from torch import nn

from mocl_seg.core.errors import CheckpointError
from mocl_seg.core.model.config import AdapterConfig, EncoderConfig, ModelConfig
from mocl_seg.core.model.network import AdapterSegmenter, is_backbone_param

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.pt"
CONFIG_NAME = "config.json"


def default_device() -> torch.device:
    return torch.device(os.environ.get("MOCL_SEG_DEVICE", "cpu"))


class ModelState:
    """A network together with everything needed to rebuild it."""

    def __init__(
        self,
        network: AdapterSegmenter,
        config: ModelConfig,
        class_names: list[str],
    ) -> None:
        self.network = network
        self.config = config
        self.class_names = list(class_names)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def device(self) -> torch.device:
        return next(self.network.parameters()).device

    def backbone_parameters(self) -> dict[str, nn.Parameter]:
        return {n: p for n, p in self.network.named_parameters() if is_backbone_param(n)}

    def trainable_parameters(self) -> dict[str, nn.Parameter]:
        return {n: p for n, p in self.network.named_parameters() if p.requires_grad}

    def backbone_hash(self) -> str:
        """SHA-256 over the backbone tensors in name order."""
        digest = hashlib.sha256()
        for name, param in sorted(self.backbone_parameters().items()):
            digest.update(name.encode("utf-8"))
            digest.update(param.detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()

    def partitioned_state(self) -> dict[str, dict[str, torch.Tensor]]:
        parts: dict[str, dict[str, torch.Tensor]] = {"backbone": {}, "adapters": {}, "decoder": {}}
        for name, tensor in self.network.state_dict().items():
            if is_backbone_param(name):
                parts["backbone"][name] = tensor
            elif name.startswith(("adapters.", "texture_proj.")):
                parts["adapters"][name] = tensor
            else:
                parts["decoder"][name] = tensor
        return parts

    def clone_weights(self) -> dict[str, torch.Tensor]:
        return {k: v.detach().clone() for k, v in self.network.state_dict().items()}

    def save(self, out_dir: Path) -> Path:
        """Write checkpoint.pt and config.json; returns the checkpoint path."""
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / CHECKPOINT_NAME
        torch.save(self.partitioned_state(), path)
        sidecar = {
            "model": self.config.model_dump(mode="json"),
            "class_names": self.class_names,
            "backbone_hash": self.backbone_hash(),
        }
        (out_dir / CONFIG_NAME).write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, checkpoint_dir: Path, device: torch.device | None = None) -> ModelState:
        """
        Rebuild a saved model.

        Raises:
            CheckpointError: missing or unreadable files, or weights not matching the config
        """
        ckpt = checkpoint_dir / CHECKPOINT_NAME
        sidecar = checkpoint_dir / CONFIG_NAME
        if not ckpt.exists() or not sidecar.exists():
            raise CheckpointError(f"no checkpoint in {checkpoint_dir}")
        try:
            meta = json.loads(sidecar.read_text(encoding="utf-8"))
            config = ModelConfig.model_validate(meta["model"])
            class_names = list(meta["class_names"])
        except (ValueError, KeyError) as e:
            raise CheckpointError(f"unreadable {sidecar}: {e}") from None

        state = build_model(
            config.encoder,
            config.adapter,
            len(class_names),
            config=config,
            class_names=class_names,
            device=device,
        )
        parts = _torch_load(ckpt)
        merged = {k: v for part in parts.values() for k, v in part.items()}
        try:
            state.network.load_state_dict(merged, strict=True)
        except RuntimeError as e:
            raise CheckpointError(f"checkpoint does not match its config: {e}") from None
        return state


def build_model(
    encoder: EncoderConfig,
    adapter: AdapterConfig,
    num_classes: int,
    *,
    config: ModelConfig | None = None,
    class_names: list[str] | None = None,
    seed: int = 42,
    device: torch.device | None = None,
) -> ModelState:
    """
    Build a network with a frozen backbone and trainable adapters/decoder.

    Raises:
        ModelConfigError: invalid encoder/adapter combination
    """
    config = (config or ModelConfig()).model_copy(update={"encoder": encoder, "adapter": adapter})
    names = class_names or [f"class{i}" for i in range(num_classes)]
    if len(names) != num_classes:
        raise CheckpointError(f"{len(names)} class names for {num_classes} classes")
    torch.manual_seed(seed)
    network = AdapterSegmenter(config, num_classes).to(device or default_device())
    state = ModelState(network, config, names)
    logger.debug(
        "built model",
        extra={
            "frozen": sum(p.numel() for p in state.backbone_parameters().values()),
            "trainable": sum(p.numel() for p in state.trainable_parameters().values()),
        },
    )
    return state


def save_backbone(state: ModelState, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"backbone": state.partitioned_state()["backbone"]}, path)
    return path


def load_pretrained_backbone(state: ModelState, checkpoint: Path) -> ModelState:
    """
    Replace the backbone weights; adapters and decoder are untouched, backbone stays frozen.

    Accepts a file holding {"backbone": state_dict} or a bare state dict.

    Raises:
        CheckpointError: missing file, or tensors whose names/shapes differ (all listed)
    """
    if not checkpoint.exists():
        raise CheckpointError(f"backbone checkpoint not found: {checkpoint}")
    loaded = _torch_load(checkpoint)
    weights = loaded.get("backbone", loaded) if isinstance(loaded, dict) else None
    if not isinstance(weights, dict):
        raise CheckpointError(f"{checkpoint} holds no state dict")

    expected = {k: v for k, v in state.network.state_dict().items() if is_backbone_param(k)}
    problems: list[str] = []
    for name, tensor in sorted(expected.items()):
        if name not in weights:
            problems.append(f"{name}: missing")
        elif tuple(weights[name].shape) != tuple(tensor.shape):
            problems.append(f"{name}: {tuple(weights[name].shape)} != {tuple(tensor.shape)}")
    problems += [f"{name}: unexpected" for name in sorted(set(weights) - set(expected))]
    if problems:
        raise CheckpointError(
            f"backbone checkpoint mismatch in {len(problems)} tensors: " + "; ".join(problems),
            context={"tensors": ", ".join(p.split(":")[0] for p in problems)},
        )

    with torch.no_grad():
        current = state.network.state_dict()
        for name in expected:
            current[name].copy_(weights[name].to(current[name].device))
    state.network.freeze_backbone()
    logger.info("loaded backbone", extra={"checkpoint": str(checkpoint)})
    return state


def _torch_load(path: Path) -> dict:  # type: ignore[type-arg]
    try:
        loaded = torch.load(path, map_location="cpu", weights_only=True)
        return loaded  # type: ignore[no-any-return]
    except Exception as e:
        raise CheckpointError(f"cannot read {path}: {e}") from None
