"""
Frozen-backbone segmentation model with adapters and texture injection.
"""

from mocl_seg.core.model.config import (
    AdapterConfig,
    EncoderConfig,
    Hyperparams,
    ModelConfig,
    validate_model_config,
)
from mocl_seg.core.model.dataset import SegmentationDataset
from mocl_seg.core.model.inference import PredictionOutput, predict
from mocl_seg.core.model.network import AdapterSegmenter
from mocl_seg.core.model.state import (
    ModelState,
    build_model,
    load_pretrained_backbone,
    save_backbone,
)
from mocl_seg.core.model.texture import extract_texture_features
from mocl_seg.core.model.training import TrainingHistory, train_adapter

__all__ = [
    "AdapterConfig",
    "AdapterSegmenter",
    "EncoderConfig",
    "Hyperparams",
    "ModelConfig",
    "ModelState",
    "PredictionOutput",
    "SegmentationDataset",
    "TrainingHistory",
    "build_model",
    "extract_texture_features",
    "load_pretrained_backbone",
    "predict",
    "save_backbone",
    "train_adapter",
    "validate_model_config",
]
