"""
Annotation data models.
"""

from __future__ import annotations

import json
from enum import Enum
from pathlib import Path  # noqa: TC003
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from mocl_seg.core.data.models import BoxAnnotation


class BackendArchitecture(Enum):
    """Checkpoint kinds a promptable backend can be loaded from."""

    BUILTIN = "builtin"
    TORCHSCRIPT = "torchscript"  # scripted (image[1,3,H,W], box[1,4]) -> logits[1,1,H,W]
    SAM_HF = "sam-hf"  # directory loadable by transformers.SamModel.from_pretrained


class BackendConfig(BaseModel, frozen=True):
    """How to build a promptable backend."""

    architecture: BackendArchitecture = BackendArchitecture.BUILTIN
    mask_threshold: float = Field(
        default=0.0, description="Logit threshold for checkpoint backends"
    )
    device: str = "cpu"


class InstanceStatus(Enum):
    """Outcome of one box in segment_boxes."""

    KEPT = "kept"
    EMPTY = "empty"  # backend returned no pixels
    ABSORBED = "absorbed"  # all pixels taken by smaller overlapping instances
    DEGENERATE = "degenerate"  # box too small to segment


class ProvenanceEntry(BaseModel, frozen=True):
    """Link between an output instance and its prompting box."""

    box_index: int
    box: BoxAnnotation
    instance_id: int | None = Field(default=None, description="None when dropped")
    status: InstanceStatus
    area: int = 0


class PixelAnnotation(BaseModel):
    """
    Pixel-level labels produced from weak boxes.

    instance_map holds consecutive labels 1..N; instance_classes[i - 1] is the class of
    label i; class_masks[c] is the union of the instances of class c.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    class_masks: dict[str, np.ndarray]
    instance_map: np.ndarray
    instance_classes: list[str] = Field(default_factory=list)
    provenance: list[ProvenanceEntry] = Field(default_factory=list)

    @property
    def num_instances(self) -> int:
        return len(self.instance_classes)

    def class_instances(self, class_name: str) -> np.ndarray:
        """Instance map restricted to one class, relabeled 1..n."""
        out = np.zeros(self.instance_map.shape, dtype=np.int32)
        next_label = 1
        for label, name in enumerate(self.instance_classes, start=1):
            if name == class_name:
                out[self.instance_map == label] = next_label
                next_label += 1
        return out

    def provenance_json(self) -> list[dict[str, Any]]:
        return [
            {
                "box_index": p.box_index,
                "box": p.box.to_json(),
                "instance_id": p.instance_id,
                "status": p.status.value,
                "area": p.area,
            }
            for p in self.provenance
        ]

    def write_provenance(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.provenance_json(), indent=2) + "\n", encoding="utf-8")
