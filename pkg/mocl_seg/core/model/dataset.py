"""
Torch dataset over training units (whole samples or "<sample>@<y>_<x>" tiles).

Units are used at native scale, the way predict() sees images: a unit larger than
input_size is cut into input_size windows with stride input_size // 2 (edge-anchored),
a smaller one is padded at the bottom/right with blank slide (white) and background
targets.
"""

from __future__ import annotations

from collections.abc import Callable
from typing import NamedTuple

import numpy as np
import torch
from torch.utils.data import Dataset

from mocl_seg.core.data.manifest import load_sample
from mocl_seg.core.data.models import DatasetManifest, PatchSample, TileCoord
from mocl_seg.core.data.tiling import crop, tile_grid
from mocl_seg.core.errors import ShapeError
from mocl_seg.core.model.texture import extract_texture_features

TargetLoader = Callable[[str], np.ndarray]
"""sample id -> C x H x W uint8 class masks."""

PAD_VALUE = 255


class UnitWindow(NamedTuple):
    """One input_size window of a unit; `tile` is relative to the padded unit region."""

    unit_id: str
    sample_id: str
    region: TileCoord | None
    tile: TileCoord


def parse_unit(unit_id: str, tile_size: int | None) -> tuple[str, TileCoord | None]:
    """Split "<sample>@<y>_<x>" into sample id and tile."""
    if "@" not in unit_id:
        return unit_id, None
    if tile_size is None:
        raise ShapeError(f"patch unit '{unit_id}' needs a tile size")
    sample_id, coords = unit_id.split("@", 1)
    y, x = (int(v) for v in coords.split("_"))
    return sample_id, TileCoord(y=y, x=x, size=tile_size)


def to_image_tensor(image: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(image)).float().div(255.0).permute(2, 0, 1)


def prepare_inputs(image: np.ndarray, texture_sigma: float) -> tuple[torch.Tensor, torch.Tensor]:
    """(3, H, W) image in [0, 1] and (1, H, W) texture map for one image."""
    texture = extract_texture_features(image, texture_sigma)
    return to_image_tensor(image), torch.from_numpy(texture[..., 0]).float().unsqueeze(0)


def window_grid(height: int, width: int, size: int) -> list[TileCoord]:
    """Windows predict() would use on an image, after padding it up to `size`."""
    return tile_grid(max(height, size), max(width, size), size, max(size // 2, 1))


def pad_to(
    array: np.ndarray, size: int, value: int, axes: tuple[int, int] = (0, 1)
) -> np.ndarray:
    """Pad the two spatial `axes` at the end up to at least `size`."""
    widths = [(0, 0)] * array.ndim
    for axis in axes:
        widths[axis] = (0, max(size - array.shape[axis], 0))
    if all(after == 0 for _, after in widths):
        return array
    return np.pad(array, widths, mode="constant", constant_values=value)


class SegmentationDataset(Dataset[dict[str, torch.Tensor]]):
    """
    Yields {"image", "texture", "target"} windows of input_size at native scale.

    The texture map is computed per window, as in inference.
    """

    def __init__(
        self,
        manifest: DatasetManifest,
        unit_ids: list[str],
        classes: list[str],
        input_size: int,
        texture_sigma: float,
        targets: TargetLoader,
        tile_size: int | None = None,
    ) -> None:
        self.manifest = manifest
        self.unit_ids = list(unit_ids)
        self.classes = list(classes)
        self.input_size = input_size
        self.texture_sigma = texture_sigma
        self.targets = targets
        self.tile_size = tile_size
        self._samples: dict[str, tuple[PatchSample, np.ndarray]] = {}
        self.windows = [w for unit in self.unit_ids for w in self._unit_windows(unit)]

    def __len__(self) -> int:
        return len(self.windows)

    def _load(self, sample_id: str) -> tuple[PatchSample, np.ndarray]:
        if sample_id not in self._samples:
            sample = load_sample(self.manifest, sample_id)
            target = self.targets(sample_id)
            if target.shape[1:] != sample.shape:
                raise ShapeError(
                    f"target {target.shape[1:]} does not match image {sample.shape}",
                    context={"sample_id": sample_id},
                )
            self._samples[sample_id] = (sample, target)
        return self._samples[sample_id]

    def _unit_windows(self, unit_id: str) -> list[UnitWindow]:
        sample_id, region = parse_unit(unit_id, self.tile_size)
        sample, _ = self._load(sample_id)
        h, w = (region.size, region.size) if region is not None else sample.shape
        return [
            UnitWindow(unit_id, sample_id, region, tile)
            for tile in window_grid(h, w, self.input_size)
        ]

    def __getitem__(self, index: int) -> dict[str, torch.Tensor]:
        window = self.windows[index]
        sample, target = self._load(window.sample_id)
        image = sample.image
        if window.region is not None:
            ys, xs = window.region.slices()
            image = image[ys, xs]
            target = target[:, ys, xs]

        ys, xs = window.tile.slices()
        image = crop(pad_to(image, self.input_size, PAD_VALUE), window.tile)
        target = pad_to(target, self.input_size, 0, axes=(1, 2))[:, ys, xs]
        image_t, texture_t = prepare_inputs(image, self.texture_sigma)
        return {
            "image": image_t,
            "texture": texture_t,
            "target": torch.from_numpy(np.ascontiguousarray(target, dtype=np.float32)),
        }
