"""
Mask derivation and weak-box generation.

- derive_mask_from_if: thresholded IF marker channel, small components removed
- boxes_from_mask: tight or jittered boxes around instance labels
- apply_label_noise: lay-annotator noise model (boundary shift, instance dropout)
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from skimage import measure, segmentation

from mocl_seg.core.data.models import BoxAnnotation, BoxSource
from mocl_seg.core.errors import MaskParameterError

DEFAULT_MIN_SIZE = 10
DEFAULT_JITTER = 0.1


def remove_small_components(mask: np.ndarray, min_size: int) -> np.ndarray:
    """Drop 8-connected components with fewer than min_size pixels."""
    binary = mask.astype(bool)
    if min_size <= 1 or not binary.any():
        return binary.astype(np.uint8)
    labels = measure.label(binary, connectivity=2)
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_size
    keep[0] = False
    return keep[labels].astype(np.uint8)


def derive_mask_from_if(
    if_image: np.ndarray, threshold: float, min_size: int = DEFAULT_MIN_SIZE
) -> np.ndarray:
    """
    Binary class mask from an IF marker channel.

    mask = if_image >= threshold, minus 8-connected components smaller than min_size.

    Raises:
        MaskParameterError: threshold outside the image dtype's intensity range
    """
    if np.issubdtype(if_image.dtype, np.integer):
        info = np.iinfo(if_image.dtype)
        lo, hi = float(info.min), float(info.max)
    else:
        lo, hi = -np.inf, np.inf
    if not (lo <= threshold <= hi) or np.isnan(threshold):
        raise MaskParameterError(
            f"threshold {threshold} outside intensity range [{lo:g}, {hi:g}]"
        )
    if min_size < 0:
        raise MaskParameterError(f"min_size must be >= 0, got {min_size}")

    return remove_small_components(if_image >= threshold, min_size)


def instances_from_mask(mask: np.ndarray) -> np.ndarray:
    """8-connected components of a binary mask as a consecutive int32 label map."""
    return measure.label(mask.astype(bool), connectivity=2).astype(np.int32)


def boxes_from_mask(
    instance_mask: np.ndarray,
    mode: BoxSource | str = BoxSource.TIGHT,
    jitter_frac: float = DEFAULT_JITTER,
    seed: int = 42,
    class_name: str = "nucleus",
) -> list[BoxAnnotation]:
    """
    One box per instance label, in ascending label order.

    Random mode displaces each side of the tight box by a uniform offset in
    [-jitter_frac * side, +jitter_frac * side], truncated toward zero and clipped to
    the image. A box that would collapse keeps one pixel.

    Raises:
        MaskParameterError: negative jitter, or random mode with jitter_frac == 0
    """
    mode = BoxSource(mode)
    if jitter_frac < 0:
        raise MaskParameterError(f"jitter_frac must be >= 0, got {jitter_frac}")
    if mode is BoxSource.RANDOM and jitter_frac == 0:
        raise MaskParameterError("random boxes need jitter_frac > 0")
    if mode is BoxSource.HUMAN:
        raise MaskParameterError("boxes derived from masks are 'tight' or 'random'")

    h, w = instance_mask.shape
    rng = np.random.default_rng(seed)
    boxes: list[BoxAnnotation] = []
    for region in measure.regionprops(instance_mask.astype(np.int32)):
        y0, x0, y1, x1 = (int(v) for v in region.bbox)
        if mode is BoxSource.RANDOM:
            bw, bh = x1 - x0, y1 - y0
            dx0, dx1 = (int(v) for v in rng.uniform(-jitter_frac * bw, jitter_frac * bw, size=2))
            dy0, dy1 = (int(v) for v in rng.uniform(-jitter_frac * bh, jitter_frac * bh, size=2))
            x0, x1 = _clip_edges(x0 + dx0, x1 + dx1, w)
            y0, y1 = _clip_edges(y0 + dy0, y1 + dy1, h)
        boxes.append(
            BoxAnnotation(class_name=class_name, x0=x0, y0=y0, x1=x1, y1=y1, source=mode)
        )
    return boxes


def _clip_edges(lo: int, hi: int, limit: int) -> tuple[int, int]:
    lo = min(max(lo, 0), limit - 1)
    hi = min(max(hi, 0), limit)
    if hi <= lo:
        hi = lo + 1
    return lo, hi


def apply_label_noise(
    instance_map: np.ndarray,
    seed: int,
    max_shift: int = 2,
    dropout: float = 0.1,
) -> np.ndarray:
    """
    Emulate lay-annotator labels from an expert instance map.

    Each instance is dropped with probability `dropout`, otherwise its boundary is
    dilated or eroded by a uniform integer shift in [-max_shift, max_shift]. Instances
    are painted in label order onto background only. Returns a relabeled int32 map.
    """
    rng = np.random.default_rng(seed)
    out = np.zeros(instance_map.shape, dtype=np.int32)
    structure = ndimage.generate_binary_structure(2, 1)
    for label in np.unique(instance_map):
        if label == 0:
            continue
        shift = int(rng.integers(-max_shift, max_shift + 1))
        if rng.random() < dropout:
            continue
        region = instance_map == label
        if shift > 0:
            region = ndimage.binary_dilation(region, structure, iterations=shift)
        elif shift < 0:
            region = ndimage.binary_erosion(region, structure, iterations=-shift)
        out[region & (out == 0)] = int(label)
    relabeled, _, _ = segmentation.relabel_sequential(out)
    return relabeled.astype(np.int32)
