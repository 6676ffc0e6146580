"""
Manifest loading and writing.

Loads the dataset inventory from JSON and validates it against the files on disk.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from mocl_seg.core.data import imageio
from mocl_seg.core.data.masks import derive_mask_from_if
from mocl_seg.core.data.models import DatasetManifest, PatchSample, SampleRecord, Stratum
from mocl_seg.core.errors import ManifestError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def load_manifest(root: Path | str, manifest_file: Path | str | None = None) -> DatasetManifest:
    """
    Load and validate a dataset manifest.

    JSON format:
    ```json
    {
      "classes": ["podocyte", "mesangial"],
      "if_thresholds": {"podocyte": 100},
      "samples": [
        {
          "id": "p0001",
          "image": "images/p0001.png",
          "if": {"podocyte": "if/podocyte/p0001.png"},
          "masks": {"podocyte": "masks/podocyte/p0001.png"},
          "instances": {"podocyte": "instances/podocyte/p0001.png"},
          "label_sets": {"student": {"podocyte": "masks_student/podocyte/p0001.png"}},
          "boxes": "boxes/p0001.jsonl",
          "stratum": "normal"
        }
      ]
    }
    ```

    Raises:
        FileNotFoundError: manifest file is missing
        ManifestError: duplicate ids, missing files or inconsistent sizes
    """
    root = Path(root).resolve()
    path = Path(manifest_file) if manifest_file is not None else root / MANIFEST_NAME
    if not path.is_absolute() and not path.exists():
        path = root / path
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")

    try:
        with path.open(encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path} is not valid JSON: {e}") from None

    if not isinstance(data, dict):
        raise ManifestError(f"{path}: top level must be an object")

    seen: set[str] = set()
    samples: list[SampleRecord] = []
    for raw in data.get("samples", []):
        record = _parse_record(root, raw)
        if record.id in seen:
            raise ManifestError("duplicate sample id", sample_id=record.id)
        seen.add(record.id)
        _validate_files(record)
        samples.append(record)

    classes = list(data.get("classes") or _classes_from(samples))
    manifest = DatasetManifest(
        root_path=root,
        classes=classes,
        if_thresholds={str(k): float(v) for k, v in (data.get("if_thresholds") or {}).items()},
        if_min_size=int(data.get("if_min_size", 10)),
        samples=samples,
    )
    logger.debug("loaded manifest", extra={"manifest": str(path), "samples": len(samples)})
    return manifest


def save_manifest(manifest: DatasetManifest, path: Path | None = None) -> Path:
    """Write a manifest with paths relative to its root."""
    root = manifest.root_path
    target = path or root / MANIFEST_NAME

    def rel(p: Path) -> str:
        try:
            return p.relative_to(root).as_posix()
        except ValueError:
            return str(p)

    samples: list[dict[str, Any]] = []
    for s in manifest.samples:
        entry: dict[str, Any] = {"id": s.id, "image": rel(s.image_path)}
        if s.if_paths:
            entry["if"] = {k: rel(v) for k, v in sorted(s.if_paths.items())}
        if s.mask_paths:
            entry["masks"] = {k: rel(v) for k, v in sorted(s.mask_paths.items())}
        if s.instance_paths:
            entry["instances"] = {k: rel(v) for k, v in sorted(s.instance_paths.items())}
        if s.label_sets:
            entry["label_sets"] = {
                tier: {k: rel(v) for k, v in sorted(masks.items())}
                for tier, masks in sorted(s.label_sets.items())
            }
        if s.box_path is not None:
            entry["boxes"] = rel(s.box_path)
        entry["stratum"] = s.stratum.value
        samples.append(entry)

    payload = {
        "classes": manifest.classes,
        "if_thresholds": manifest.if_thresholds,
        "if_min_size": manifest.if_min_size,
        "samples": samples,
    }
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return target


def load_sample(
    manifest: DatasetManifest, sample_id: str, label_set: str | None = None
) -> PatchSample:
    """
    Decode every file of one sample.

    Args:
        manifest: Loaded manifest
        sample_id: Sample to load
        label_set: Alternate label directory (e.g. "student"); falls back to the
            expert masks for classes the set does not cover

    A class with an IF channel and a manifest threshold but no mask file gets its mask
    from derive_mask_from_if.
    """
    record = manifest.get(sample_id)
    masks = dict(record.mask_paths)
    if label_set is not None:
        masks.update(record.label_sets.get(label_set, {}))

    if_channels = {k: imageio.read_gray(v) for k, v in record.if_paths.items()}
    class_masks = {k: imageio.read_mask(v) for k, v in masks.items()}
    for name, channel in if_channels.items():
        if name not in class_masks and name in manifest.if_thresholds:
            class_masks[name] = derive_mask_from_if(
                channel, manifest.if_thresholds[name], manifest.if_min_size
            )

    boxes = imageio.read_boxes(record.box_path) if record.box_path is not None else []
    return PatchSample(
        id=record.id,
        image=imageio.read_image(record.image_path),
        if_channels=if_channels,
        class_masks=class_masks,
        instance_maps={k: imageio.read_instances(v) for k, v in record.instance_paths.items()},
        boxes=boxes,
        stratum=record.stratum,
    )


def _parse_record(root: Path, raw: Any) -> SampleRecord:
    if not isinstance(raw, dict) or "id" not in raw:
        raise ManifestError(f"sample entry without id: {raw!r}")
    sample_id = str(raw["id"])

    def resolve(value: Any) -> Path:
        p = Path(str(value))
        return p if p.is_absolute() else root / p

    try:
        image = raw.get("image") or raw.get("image_path")
        if image is None:
            raise ManifestError("missing 'image'", sample_id=sample_id)
        box_value = raw.get("boxes") or raw.get("box_path")
        return SampleRecord(
            id=sample_id,
            image_path=resolve(image),
            if_paths={
                k: resolve(v) for k, v in (raw.get("if") or raw.get("if_paths") or {}).items()
            },
            mask_paths={
                k: resolve(v) for k, v in (raw.get("masks") or raw.get("mask_paths") or {}).items()
            },
            instance_paths={k: resolve(v) for k, v in (raw.get("instances") or {}).items()},
            label_sets={
                tier: {k: resolve(v) for k, v in masks.items()}
                for tier, masks in (raw.get("label_sets") or {}).items()
            },
            box_path=resolve(box_value) if box_value else None,
            stratum=Stratum(raw.get("stratum", "unknown")),
        )
    except ValueError as e:
        raise ManifestError(str(e), sample_id=sample_id) from None


def _validate_files(record: SampleRecord) -> None:
    expected: tuple[int, int] | None = None
    for role, p in record.all_paths():
        if not p.exists():
            raise ManifestError(f"{role} file does not exist: {p}", sample_id=record.id)
        if role == "boxes":
            continue
        try:
            size = imageio.image_size(p)
        except Exception as e:
            raise ManifestError(
                f"{role} file cannot be decoded: {e}", sample_id=record.id
            ) from None
        if expected is None:
            expected = size
        elif size != expected:
            raise ManifestError(
                f"{role} is {size[0]}x{size[1]}, image is {expected[0]}x{expected[1]}",
                sample_id=record.id,
            )


def _classes_from(samples: list[SampleRecord]) -> list[str]:
    names: set[str] = set()
    for s in samples:
        names.update(s.mask_paths)
        names.update(s.if_paths)
    return sorted(names)


def stack_masks(sample: PatchSample, classes: list[str]) -> np.ndarray:
    """C x H x W uint8 stack in class order (absent classes are empty)."""
    h, w = sample.shape
    out = np.zeros((len(classes), h, w), dtype=np.uint8)
    for i, name in enumerate(classes):
        if name in sample.class_masks:
            out[i] = sample.class_masks[name]
    return out
