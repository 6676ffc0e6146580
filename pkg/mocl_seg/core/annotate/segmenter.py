"""
Box-to-pixel annotation.

segment_boxes runs the backend once per box, resolves overlaps (contested pixels go
to the smaller instance, ties to the lower box index) and relabels the surviving
instances consecutively in box order. annotate_manifest applies it to every sample
and writes masks, a 16-bit instance map and provenance JSON per sample.
"""

from __future__ import annotations

import json
import logging
import zlib
from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np

from mocl_seg.core.annotate.backends import PromptableBackend, check_box, restrict_to_box
from mocl_seg.core.annotate.models import InstanceStatus, PixelAnnotation, ProvenanceEntry
from mocl_seg.core.data import imageio
from mocl_seg.core.data.manifest import load_sample
from mocl_seg.core.data.masks import boxes_from_mask, instances_from_mask
from mocl_seg.core.data.models import BoxAnnotation, BoxSource, DatasetManifest, PatchSample
from mocl_seg.core.errors import AnnotationError, BoxBoundsError

logger = logging.getLogger(__name__)

INDEX_NAME = "annotations.json"

BoxProvider = Callable[[PatchSample], list[BoxAnnotation]]
"""Replaces sample_boxes, e.g. to prompt with boxes of noised labels."""


def segment_boxes(
    image: np.ndarray,
    boxes: list[BoxAnnotation],
    backend: PromptableBackend,
    classes: list[str] | None = None,
) -> PixelAnnotation:
    """
    Convert boxes into a PixelAnnotation.

    Raises:
        BoxBoundsError: a box lies outside the image (checked before any segmentation)
    """
    h, w = image.shape[:2]
    for box in boxes:
        check_box(image, box)

    names = list(classes or [])
    for box in boxes:
        if box.class_name not in names:
            names.append(box.class_name)

    provenance: dict[int, ProvenanceEntry] = {}
    candidates: list[tuple[int, np.ndarray, int]] = []
    for index, box in enumerate(boxes):
        try:
            mask = restrict_to_box(backend.segment(image, box), box)
        except BoxBoundsError:
            raise
        except AnnotationError as e:
            logger.debug("box skipped", extra={"box": str(box), "reason": e.message})
            provenance[index] = ProvenanceEntry(
                box_index=index, box=box, status=InstanceStatus.DEGENERATE
            )
            continue
        area = int(mask.sum())
        if area == 0:
            provenance[index] = ProvenanceEntry(
                box_index=index, box=box, status=InstanceStatus.EMPTY
            )
            continue
        candidates.append((index, mask.astype(bool), area))

    # Larger first so smaller instances overwrite; equal areas paint the higher index first.
    owner = np.full((h, w), -1, dtype=np.int64)
    for index, mask, _ in sorted(candidates, key=lambda c: (-c[2], -c[0])):
        owner[mask] = index

    instance_map = np.zeros((h, w), dtype=np.int32)
    instance_classes: list[str] = []
    for index, _, _ in sorted(candidates, key=lambda c: c[0]):
        pixels = owner == index
        area = int(pixels.sum())
        box = boxes[index]
        if area == 0:
            provenance[index] = ProvenanceEntry(
                box_index=index, box=box, status=InstanceStatus.ABSORBED
            )
            continue
        instance_classes.append(box.class_name)
        label = len(instance_classes)
        instance_map[pixels] = label
        provenance[index] = ProvenanceEntry(
            box_index=index, box=box, instance_id=label, status=InstanceStatus.KEPT, area=area
        )

    class_masks = {name: np.zeros((h, w), dtype=np.uint8) for name in names}
    for label, name in enumerate(instance_classes, start=1):
        class_masks[name][instance_map == label] = 1

    return PixelAnnotation(
        class_masks=class_masks,
        instance_map=instance_map,
        instance_classes=instance_classes,
        provenance=[provenance[i] for i in sorted(provenance)],
    )


def sample_boxes(
    sample: PatchSample,
    classes: list[str],
    mode: BoxSource,
    jitter_frac: float,
    seed: int,
) -> list[BoxAnnotation]:
    """
    Boxes to prompt with for one sample.

    Tight mode uses the sample's stored boxes when it has any. Otherwise, and always in
    random mode, boxes are derived from the instance maps (or from the connected
    components of the class masks).
    """
    if mode is not BoxSource.RANDOM and sample.boxes:
        return [b for b in sample.boxes if b.class_name in classes]

    sample_seed = seed ^ zlib.crc32(sample.id.encode("utf-8"))
    boxes: list[BoxAnnotation] = []
    for offset, name in enumerate(classes):
        if name in sample.instance_maps:
            labels = sample.instance_maps[name]
        elif name in sample.class_masks:
            labels = instances_from_mask(sample.class_masks[name])
        else:
            continue
        boxes += boxes_from_mask(
            labels,
            BoxSource.RANDOM if mode is BoxSource.RANDOM else BoxSource.TIGHT,
            jitter_frac=jitter_frac,
            seed=sample_seed + offset,
            class_name=name,
        )
    return boxes


def annotate_manifest(
    manifest: DatasetManifest,
    backend: PromptableBackend,
    out_dir: Path,
    sample_ids: list[str] | None = None,
    mode: BoxSource = BoxSource.TIGHT,
    jitter_frac: float = 0.1,
    seed: int = 42,
    box_provider: BoxProvider | None = None,
) -> Path:
    """
    Annotate samples and write masks/<class>/<id>.png, instances/<id>.png,
    provenance/<id>.json and an annotations.json index. Returns the index path.
    """
    classes = manifest.classes
    index: dict[str, Any] = {
        "backend": backend.name,
        "box_mode": mode.value,
        "jitter_frac": jitter_frac,
        "seed": seed,
        "classes": classes,
        "samples": {},
    }
    totals = {status.value: 0 for status in InstanceStatus}
    for sample_id in sample_ids if sample_ids is not None else manifest.ids:
        sample = load_sample(manifest, sample_id)
        if box_provider is not None:
            boxes = box_provider(sample)
        else:
            boxes = sample_boxes(sample, classes, mode, jitter_frac, seed)
        annotation = segment_boxes(sample.image, boxes, backend, classes=classes)

        entry: dict[str, Any] = {"masks": {}}
        for name in classes:
            rel = Path("masks") / name / f"{sample_id}.png"
            imageio.write_mask(out_dir / rel, annotation.class_masks[name])
            entry["masks"][name] = rel.as_posix()
        entry["instances"] = (Path("instances") / f"{sample_id}.png").as_posix()
        imageio.write_instances(out_dir / entry["instances"], annotation.instance_map)
        entry["instance_classes"] = annotation.instance_classes
        entry["provenance"] = (Path("provenance") / f"{sample_id}.json").as_posix()
        annotation.write_provenance(out_dir / entry["provenance"])
        index["samples"][sample_id] = entry

        for p in annotation.provenance:
            totals[p.status.value] += 1

    index_path = out_dir / INDEX_NAME
    out_dir.mkdir(parents=True, exist_ok=True)
    index_path.write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    logger.info(
        "annotated samples",
        extra={"samples": len(index["samples"]), "backend": backend.name, **totals},
    )
    return index_path


def read_annotation_index(annotation_dir: Path) -> dict[str, Any]:
    """The index annotate_manifest writes next to the masks."""
    data: dict[str, Any] = json.loads((annotation_dir / INDEX_NAME).read_text(encoding="utf-8"))
    return data


def load_annotation_masks(
    annotation_dir: Path,
    sample_id: str,
    classes: list[str],
    index: dict[str, Any] | None = None,
) -> np.ndarray:
    """
    C x H x W uint8 class masks written by annotate_manifest.

    Pass an index from read_annotation_index() when loading many samples.
    """
    if index is None:
        index = read_annotation_index(annotation_dir)
    try:
        entry = index["samples"][sample_id]
    except KeyError:
        raise AnnotationError(
            f"no annotation for sample '{sample_id}' in {annotation_dir}"
        ) from None
    return np.stack([imageio.read_mask(annotation_dir / entry["masks"][name]) for name in classes])
