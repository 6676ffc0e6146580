"""
Weak-box to pixel-mask annotation.
"""

from mocl_seg.core.annotate.backends import (
    BuiltinBackend,
    PromptableBackend,
    builtin_segment,
    load_checkpoint_backend,
)
from mocl_seg.core.annotate.models import (
    BackendArchitecture,
    BackendConfig,
    InstanceStatus,
    PixelAnnotation,
    ProvenanceEntry,
)
from mocl_seg.core.annotate.segmenter import (
    annotate_manifest,
    load_annotation_masks,
    read_annotation_index,
    sample_boxes,
    segment_boxes,
)

__all__ = [
    "BackendArchitecture",
    "BackendConfig",
    "BuiltinBackend",
    "InstanceStatus",
    "PixelAnnotation",
    "PromptableBackend",
    "ProvenanceEntry",
    "annotate_manifest",
    "builtin_segment",
    "load_annotation_masks",
    "load_checkpoint_backend",
    "read_annotation_index",
    "sample_boxes",
    "segment_boxes",
]
