"""
Promptable segmentation backends.

A backend turns (image, box) into a binary H x W mask that is zero outside the box.
The builtin backend is a classical Otsu segmenter; checkpoint backends wrap a
TorchScript module or a transformers SAM model behind the same contract.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Protocol, runtime_checkable

import numpy as np
from scipy import ndimage
from skimage import color, filters, measure

from mocl_seg.core.annotate.models import BackendArchitecture, BackendConfig
from mocl_seg.core.data.models import BoxAnnotation
from mocl_seg.core.errors import AnnotationError, BackendLoadError, BoxBoundsError

logger = logging.getLogger(__name__)

MIN_BOX_AREA = 4


@runtime_checkable
class PromptableBackend(Protocol):
    """Box-prompted segmenter. Implementations hold no per-call state."""

    name: str

    def segment(self, image: np.ndarray, box: BoxAnnotation) -> np.ndarray:
        """Binary uint8 H x W mask, zero outside the box."""
        ...


def check_box(image: np.ndarray, box: BoxAnnotation) -> None:
    """Raise BoxBoundsError when the box does not lie inside the image."""
    h, w = image.shape[:2]
    if not box.fits(h, w):
        raise BoxBoundsError(f"box {box} outside image {h}x{w}", context={"box": str(box)})


def restrict_to_box(mask: np.ndarray, box: BoxAnnotation) -> np.ndarray:
    out = np.zeros(mask.shape[:2], dtype=np.uint8)
    ys, xs = slice(box.y0, box.y1), slice(box.x0, box.x1)
    out[ys, xs] = mask[ys, xs] > 0
    return out


# =============================================================================
# Builtin classical backend
# =============================================================================


def builtin_segment(image: np.ndarray, box: BoxAnnotation) -> np.ndarray:
    """
    Segment the object inside a box without a learned model.

    Steps inside the box: grayscale, Otsu bipartition, keep the partition whose mean is
    farthest from the mean of the 1-px border ring, keep its largest 8-connected
    component, close with a 3x3 square. Uniform boxes give an empty mask.

    Raises:
        BoxBoundsError: box outside the image
        AnnotationError: box area below 4 px
    """
    check_box(image, box)
    if box.area < MIN_BOX_AREA:
        raise AnnotationError(f"box {box} has area {box.area} < {MIN_BOX_AREA}")

    h, w = image.shape[:2]
    out = np.zeros((h, w), dtype=np.uint8)
    crop = image[box.y0 : box.y1, box.x0 : box.x1]
    gray = color.rgb2gray(crop) if crop.ndim == 3 else crop.astype(np.float64)
    if float(gray.max()) - float(gray.min()) <= 1e-12:
        return out

    foreground = gray > filters.threshold_otsu(gray)
    ring = np.zeros(gray.shape, dtype=bool)
    ring[0, :] = ring[-1, :] = True
    ring[:, 0] = ring[:, -1] = True
    ring_mean = float(gray[ring].mean())

    if foreground.all() or not foreground.any():
        return out
    fg_gap = abs(float(gray[foreground].mean()) - ring_mean)
    bg_gap = abs(float(gray[~foreground].mean()) - ring_mean)
    chosen = foreground if fg_gap >= bg_gap else ~foreground

    labels = measure.label(chosen, connectivity=2)
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    largest = labels == int(np.argmax(sizes))

    padded = np.pad(largest, 1)
    closed = ndimage.binary_closing(padded, structure=np.ones((3, 3), dtype=bool))[1:-1, 1:-1]

    out[box.y0 : box.y1, box.x0 : box.x1] = closed
    return out


class BuiltinBackend:
    """Classical Otsu backend; needs no checkpoint."""

    name = "builtin"

    def segment(self, image: np.ndarray, box: BoxAnnotation) -> np.ndarray:
        return builtin_segment(image, box)


# =============================================================================
# Checkpoint backends
# =============================================================================


class TorchScriptBackend:
    """Scripted module: (image[1,3,H,W] in [0,1], box[1,4] xyxy) -> logits[1,1,H,W]."""

    name = "torchscript"

    def __init__(self, module: Any, config: BackendConfig) -> None:
        self._module = module
        self._config = config

    def segment(self, image: np.ndarray, box: BoxAnnotation) -> np.ndarray:
        import torch

        check_box(image, box)
        h, w = image.shape[:2]
        pixels = torch.from_numpy(np.ascontiguousarray(image)).float().div(255.0)
        pixels = pixels.permute(2, 0, 1).unsqueeze(0).to(self._config.device)
        prompt = torch.tensor([[box.x0, box.y0, box.x1, box.y1]], dtype=torch.float32)
        with torch.no_grad():
            logits = self._module(pixels, prompt.to(self._config.device))
        mask = logits.reshape(-1, *logits.shape[-2:])[0].cpu().numpy()
        if mask.shape != (h, w):
            raise AnnotationError(f"backend returned {mask.shape}, expected {(h, w)}")
        return restrict_to_box(mask > self._config.mask_threshold, box)


class TransformersSamBackend:
    """SAM through transformers' SamModel/SamProcessor, one call per box."""

    name = "sam-hf"

    def __init__(self, model: Any, processor: Any, config: BackendConfig) -> None:
        self._model = model
        self._processor = processor
        self._config = config

    def segment(self, image: np.ndarray, box: BoxAnnotation) -> np.ndarray:
        import torch

        check_box(image, box)
        inputs = self._processor(
            images=image,
            input_boxes=[[[float(box.x0), float(box.y0), float(box.x1), float(box.y1)]]],
            return_tensors="pt",
        ).to(self._config.device)
        with torch.no_grad():
            outputs = self._model(**inputs, multimask_output=False)
        masks = self._processor.image_processor.post_process_masks(
            outputs.pred_masks.cpu(),
            inputs["original_sizes"].cpu(),
            inputs["reshaped_input_sizes"].cpu(),
            binarize=False,
        )[0]
        logits = masks.reshape(-1, *masks.shape[-2:])[0].numpy()
        return restrict_to_box(logits > self._config.mask_threshold, box)


def load_checkpoint_backend(
    checkpoint: Path | str | None, config: BackendConfig | None = None
) -> PromptableBackend:
    """
    Build a backend for the declared architecture.

    Raises:
        BackendLoadError: checkpoint missing, unreadable, or not of the declared kind
    """
    config = config or BackendConfig()
    if config.architecture is BackendArchitecture.BUILTIN:
        return BuiltinBackend()

    if checkpoint is None:
        raise BackendLoadError(f"architecture '{config.architecture.value}' needs a checkpoint")
    path = Path(checkpoint)
    if not path.exists():
        raise BackendLoadError(f"checkpoint not found: {path}", context={"path": str(path)})

    if config.architecture is BackendArchitecture.TORCHSCRIPT:
        return _load_torchscript(path, config)
    return _load_sam_hf(path, config)


def _load_torchscript(path: Path, config: BackendConfig) -> TorchScriptBackend:
    import torch

    if not path.is_file():
        raise BackendLoadError(f"torchscript checkpoint must be a file: {path}")
    try:
        module = torch.jit.load(str(path), map_location=config.device)
    except Exception as e:
        raise BackendLoadError(f"not a TorchScript archive: {path} ({e})") from None
    module.eval()

    backend = TorchScriptBackend(module, config)
    blank = np.zeros((16, 16, 3), dtype=np.uint8)
    try:
        backend.segment(blank, BoxAnnotation(class_name="check", x0=4, y0=4, x1=12, y1=12))
    except Exception as e:
        raise BackendLoadError(f"checkpoint does not follow the box-prompt contract: {e}") from None
    logger.info("loaded torchscript backend", extra={"checkpoint": str(path)})
    return backend


def _load_sam_hf(path: Path, config: BackendConfig) -> TransformersSamBackend:
    try:
        from transformers import SamModel, SamProcessor
    except ImportError:
        raise BackendLoadError(
            "the sam-hf backend needs the 'sam' extra (pip install mocl-seg[sam])"
        ) from None
    try:
        model = SamModel.from_pretrained(str(path)).to(config.device).eval()
        processor = SamProcessor.from_pretrained(str(path))
    except Exception as e:
        raise BackendLoadError(f"not a SAM checkpoint directory: {path} ({e})") from None
    logger.info("loaded sam-hf backend", extra={"checkpoint": str(path)})
    return TransformersSamBackend(model, processor, config)
