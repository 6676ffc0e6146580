"""
Dataset ingest: manifests, splits, masks, boxes, tiling and the synthetic generator.
"""

from mocl_seg.core.data.manifest import load_manifest, load_sample, save_manifest, stack_masks
from mocl_seg.core.data.masks import (
    apply_label_noise,
    boxes_from_mask,
    derive_mask_from_if,
    instances_from_mask,
)
from mocl_seg.core.data.models import (
    BoxAnnotation,
    BoxSource,
    DatasetManifest,
    PatchRef,
    PatchSample,
    SampleRecord,
    SplitAssignment,
    Stratum,
    SubsampleUnit,
    TileCoord,
)
from mocl_seg.core.data.splits import sample_of, split_dataset, subsample_training
from mocl_seg.core.data.synthetic import generate_synthetic_dataset
from mocl_seg.core.data.tiling import tile_image

__all__ = [
    "BoxAnnotation",
    "BoxSource",
    "DatasetManifest",
    "PatchRef",
    "PatchSample",
    "SampleRecord",
    "SplitAssignment",
    "Stratum",
    "SubsampleUnit",
    "TileCoord",
    "apply_label_noise",
    "boxes_from_mask",
    "derive_mask_from_if",
    "generate_synthetic_dataset",
    "instances_from_mask",
    "load_manifest",
    "load_sample",
    "sample_of",
    "save_manifest",
    "split_dataset",
    "stack_masks",
    "subsample_training",
    "tile_image",
]
