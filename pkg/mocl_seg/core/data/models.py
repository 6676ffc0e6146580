"""
Dataset data models.

Manifest records, box annotations, loaded patches and split assignments.

CRITICAL DESIGN DECISIONS:
- Boxes are half-open pixel intervals: x0 <= x < x1, y0 <= y < y1
- Manifest paths are stored relative to the dataset root and resolved on load
- Split id lists are always sorted so equal seeds give bitwise-equal splits
"""

from __future__ import annotations

from enum import Enum
from pathlib import Path  # noqa: TC003
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

# =============================================================================
# Enums
# =============================================================================


class Stratum(Enum):
    """Tissue state of the source glomerulus."""

    NORMAL = "normal"
    INJURED = "injured"
    UNKNOWN = "unknown"


class BoxSource(Enum):
    """Where a box came from."""

    TIGHT = "tight"  # Minimal box around a known instance
    RANDOM = "random"  # Tight box with jittered edges
    HUMAN = "human"  # Drawn by an annotator


class SubsampleUnit(Enum):
    """What a training fraction counts."""

    SAMPLE = "sample"
    PATCH = "patch"


# =============================================================================
# Boxes
# =============================================================================


class BoxAnnotation(BaseModel, frozen=True):
    """Axis-aligned box around one nucleus."""

    class_name: str
    x0: int = Field(ge=0)
    y0: int = Field(ge=0)
    x1: int
    y1: int
    source: BoxSource = BoxSource.HUMAN

    @model_validator(mode="after")
    def _check_order(self) -> BoxAnnotation:
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"empty box ({self.x0},{self.y0},{self.x1},{self.y1})")
        return self

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def fits(self, height: int, width: int) -> bool:
        """Check the box lies within an image of the given size."""
        return self.x1 <= width and self.y1 <= height

    def to_json(self) -> dict[str, Any]:
        """JSON Lines record: {"class", "bbox", "source"}."""
        return {
            "class": self.class_name,
            "bbox": [self.x0, self.y0, self.x1, self.y1],
            "source": self.source.value,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> BoxAnnotation:
        x0, y0, x1, y1 = (int(v) for v in data["bbox"])
        return cls(
            class_name=str(data["class"]),
            x0=x0,
            y0=y0,
            x1=x1,
            y1=y1,
            source=BoxSource(data.get("source", "human")),
        )

    def __str__(self) -> str:
        return f"{self.class_name}[{self.x0}:{self.x1}, {self.y0}:{self.y1}]"


# =============================================================================
# Manifest
# =============================================================================


class SampleRecord(BaseModel, frozen=True):
    """One manifest entry. Paths are absolute after load_manifest()."""

    id: str = Field(min_length=1)
    image_path: Path
    if_paths: dict[str, Path] = Field(default_factory=dict)
    mask_paths: dict[str, Path] = Field(default_factory=dict)
    instance_paths: dict[str, Path] = Field(
        default_factory=dict,
        description="Optional 16-bit instance label maps per class",
    )
    label_sets: dict[str, dict[str, Path]] = Field(
        default_factory=dict,
        description="Alternate label directories, e.g. {'student': {class: path}}",
    )
    box_path: Path | None = None
    stratum: Stratum = Stratum.UNKNOWN

    def all_paths(self) -> list[tuple[str, Path]]:
        """Every referenced file with a short role label."""
        paths: list[tuple[str, Path]] = [("image", self.image_path)]
        paths += [(f"if/{k}", v) for k, v in sorted(self.if_paths.items())]
        paths += [(f"mask/{k}", v) for k, v in sorted(self.mask_paths.items())]
        paths += [(f"instances/{k}", v) for k, v in sorted(self.instance_paths.items())]
        for tier, masks in sorted(self.label_sets.items()):
            paths += [(f"{tier}/{k}", v) for k, v in sorted(masks.items())]
        if self.box_path is not None:
            paths.append(("boxes", self.box_path))
        return paths


class DatasetManifest(BaseModel, frozen=True):
    """Validated patch inventory."""

    root_path: Path
    classes: list[str] = Field(default_factory=list)
    if_thresholds: dict[str, float] = Field(
        default_factory=dict,
        description="Per-marker intensity threshold for IF-derived masks",
    )
    if_min_size: int = Field(default=10, ge=0)
    samples: list[SampleRecord] = Field(default_factory=list)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def get(self, sample_id: str) -> SampleRecord:
        for sample in self.samples:
            if sample.id == sample_id:
                return sample
        raise KeyError(sample_id)

    def strata(self) -> dict[str, Stratum]:
        return {s.id: s.stratum for s in self.samples}


# =============================================================================
# Loaded samples
# =============================================================================


class PatchSample(BaseModel):
    """One aligned training unit held in memory."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    id: str
    image: np.ndarray = Field(description="H x W x 3 uint8")
    if_channels: dict[str, np.ndarray] = Field(default_factory=dict)
    class_masks: dict[str, np.ndarray] = Field(default_factory=dict)
    instance_maps: dict[str, np.ndarray] = Field(default_factory=dict)
    boxes: list[BoxAnnotation] = Field(default_factory=list)
    stratum: Stratum = Stratum.UNKNOWN

    @model_validator(mode="after")
    def _check_shapes(self) -> PatchSample:
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"image must be H x W x 3, got {self.image.shape}")
        shape = self.image.shape[:2]
        for group in (self.if_channels, self.class_masks, self.instance_maps):
            for name, arr in group.items():
                if arr.shape != shape:
                    raise ValueError(f"'{name}' has shape {arr.shape}, image is {shape}")
        for name, mask in self.class_masks.items():
            if mask.size and not np.isin(mask, (0, 1)).all():
                raise ValueError(f"mask '{name}' is not binary")
        return self

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.image.shape[0]), int(self.image.shape[1])


class TileCoord(BaseModel, frozen=True):
    """Top-left corner and edge length of a square tile."""

    y: int = Field(ge=0)
    x: int = Field(ge=0)
    size: int = Field(gt=0)

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.size), slice(self.x, self.x + self.size)


class PatchRef(BaseModel, frozen=True):
    """A tile of a manifest sample, the unit of patch-mode training."""

    sample_id: str
    tile: TileCoord

    @property
    def id(self) -> str:
        return f"{self.sample_id}@{self.tile.y}_{self.tile.x}"


# =============================================================================
# Splits
# =============================================================================


class SplitAssignment(BaseModel, frozen=True):
    """Train/val/test partition of manifest ids (train may hold patch ids)."""

    train: list[str]
    val: list[str]
    test: list[str]
    seed: int
    ratios: tuple[int, int, int]
    unit: SubsampleUnit = SubsampleUnit.SAMPLE
    fraction: float = 1.0

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)
