"""
Image and annotation file I/O.

PNG goes through Pillow, TIFF through tifffile. Masks are single-channel PNG
with values {0, 255}; instance maps are 16-bit PNG; boxes are JSON Lines.
"""

from __future__ import annotations

import json
from typing import TYPE_CHECKING

import numpy as np
import tifffile
from PIL import Image

from mocl_seg.core.data.models import BoxAnnotation

if TYPE_CHECKING:
    from pathlib import Path

_TIFF_SUFFIXES = {".tif", ".tiff"}


def _is_tiff(path: Path) -> bool:
    return path.suffix.lower() in _TIFF_SUFFIXES


def image_size(path: Path) -> tuple[int, int]:
    """Spatial size (H, W) read from the file header where possible."""
    if _is_tiff(path):
        with tifffile.TiffFile(path) as tif:
            shape = tif.pages[0].shape
        return int(shape[0]), int(shape[1])
    with Image.open(path) as img:
        width, height = img.size
    return height, width


def read_image(path: Path) -> np.ndarray:
    """Read an RGB image as H x W x 3 uint8."""
    if _is_tiff(path):
        arr = np.asarray(tifffile.imread(path))
        if arr.ndim == 2:
            arr = np.repeat(arr[..., None], 3, axis=2)
        arr = arr[..., :3]
        if arr.dtype != np.uint8:
            arr = _to_uint8(arr)
        return np.ascontiguousarray(arr)
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8).copy()


def read_gray(path: Path) -> np.ndarray:
    """Read a single-channel intensity image, keeping its dtype."""
    if _is_tiff(path):
        arr = np.asarray(tifffile.imread(path))
    else:
        with Image.open(path) as img:
            arr = np.asarray(img if img.mode in ("L", "I;16", "I", "F") else img.convert("L"))
    if arr.ndim == 3:
        arr = arr[..., 0]
    return arr.copy()


def read_mask(path: Path) -> np.ndarray:
    """Read a binary mask as uint8 {0, 1}."""
    return (read_gray(path) > 0).astype(np.uint8)


def read_instances(path: Path) -> np.ndarray:
    """Read an instance label map as int32."""
    return read_gray(path).astype(np.int32)


def write_image(path: Path, image: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(image.astype(np.uint8))).save(path)


def write_gray(path: Path, image: np.ndarray) -> None:
    """Write a single-channel 8-bit intensity image."""
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(image.astype(np.uint8))).save(path)


def write_mask(path: Path, mask: np.ndarray) -> None:
    """Write a binary mask as {0, 255}."""
    write_gray(path, (mask > 0).astype(np.uint8) * 255)


def write_instances(path: Path, labels: np.ndarray) -> None:
    """Write an instance label map as 16-bit PNG."""
    if labels.size and int(labels.max()) > np.iinfo(np.uint16).max:
        raise ValueError(f"{path}: too many instances for a 16-bit map")
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(labels.astype(np.uint16))).save(path)


def read_boxes(path: Path) -> list[BoxAnnotation]:
    """Read boxes from a JSON Lines file."""
    boxes: list[BoxAnnotation] = []
    with path.open(encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                boxes.append(BoxAnnotation.from_json(json.loads(line)))
    return boxes


def write_boxes(path: Path, boxes: list[BoxAnnotation]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for box in boxes:
            f.write(json.dumps(box.to_json()) + "\n")


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    if np.issubdtype(arr.dtype, np.integer):
        info = np.iinfo(arr.dtype)
        return (arr.astype(np.float64) / info.max * 255.0).round().astype(np.uint8)
    lo, hi = float(arr.min()), float(arr.max())
    if hi <= 1.0 and lo >= 0.0:
        return (arr * 255.0).round().astype(np.uint8)
    return np.clip(arr, 0, 255).round().astype(np.uint8)
