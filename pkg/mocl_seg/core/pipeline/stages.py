"""
Pipeline stages for one seed.

Each stage reads what the previous stages wrote into the seed directory and declares
the files it produces; a stage whose outputs all exist counts as done.

    seed-<n>/
      split.json
      labels/annotations.json, labels/labels.json, labels/masks/...
      checkpoints/train/, history.json
      checkpoints/refine/, refine_history.json
      metrics.json
"""

from __future__ import annotations

import json
import logging
import zlib
from collections.abc import Callable
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

from mocl_seg.core.annotate import (
    annotate_manifest,
    load_annotation_masks,
    read_annotation_index,
)
from mocl_seg.core.annotate.backends import PromptableBackend, load_checkpoint_backend
from mocl_seg.core.annotate.segmenter import INDEX_NAME
from mocl_seg.core.data import imageio
from mocl_seg.core.data.manifest import load_manifest, load_sample
from mocl_seg.core.data.masks import apply_label_noise, boxes_from_mask, instances_from_mask
from mocl_seg.core.data.models import (
    BoxAnnotation,
    BoxSource,
    DatasetManifest,
    PatchRef,
    PatchSample,
    SplitAssignment,
    SubsampleUnit,
)
from mocl_seg.core.data.splits import sample_of, split_dataset, subsample_training
from mocl_seg.core.data.tiling import tile_grid
from mocl_seg.core.metrics.report import MetricsReport, evaluate_split
from mocl_seg.core.mocl.refine import MoclObjective, refine
from mocl_seg.core.model.config import Hyperparams
from mocl_seg.core.model.dataset import SegmentationDataset
from mocl_seg.core.model.state import ModelState, build_model, load_pretrained_backbone
from mocl_seg.core.model.training import train_adapter
from mocl_seg.core.pipeline.config import AnnotatorTier, Condition, ExperimentConfig

logger = logging.getLogger(__name__)

SPLIT_NAME = "split.json"
LABELS_DIR = "labels"
LABEL_META_NAME = "labels.json"
TRAIN_CHECKPOINT = "checkpoints/train"
REFINE_CHECKPOINT = "checkpoints/refine"
HISTORY_NAME = "history.json"
REFINE_HISTORY_NAME = "refine_history.json"
METRICS_NAME = "metrics.json"
STUDENT_SET = "student"


@dataclass
class StageContext:
    """Config, seed and directory shared by the stages of one seed."""

    config: ExperimentConfig
    seed: int
    run_dir: Path

    @cached_property
    def manifest(self) -> DatasetManifest:
        manifest = load_manifest(self.config.data.root, self.config.data.manifest)
        return manifest.model_copy(update={"if_min_size": self.config.data.if_min_size})

    @property
    def classes(self) -> list[str]:
        return self.manifest.classes

    @property
    def labels_dir(self) -> Path:
        return self.run_dir / LABELS_DIR

    def path(self, name: str) -> Path:
        return self.run_dir / name

    def split(self) -> SplitAssignment:
        return SplitAssignment.model_validate_json(
            self.path(SPLIT_NAME).read_text(encoding="utf-8")
        )

    def sample_seed(self, sample_id: str) -> int:
        return self.seed ^ zlib.crc32(sample_id.encode("utf-8"))

    def provided(self, stage: str) -> bool:
        return stage in self.config.provided_stages


@dataclass(frozen=True)
class Stage:
    name: str
    outputs: Callable[[StageContext], list[Path]]
    run: Callable[[StageContext], list[Path]]
    enabled: Callable[[StageContext], bool] = lambda ctx: True
    provided: Callable[[StageContext], bool] = lambda ctx: False

    def done(self, ctx: StageContext) -> bool:
        return all(p.exists() for p in self.outputs(ctx))


def _write_json(path: Path, payload: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# =============================================================================
# prepare
# =============================================================================


def patch_index(
    manifest: DatasetManifest, sample_ids: list[str], tile: int
) -> dict[str, list[PatchRef]]:
    """Non-overlapping tiles (last row/column edge-anchored) of every listed sample."""
    index: dict[str, list[PatchRef]] = {}
    for sample_id in sample_ids:
        h, w = imageio.image_size(manifest.get(sample_id).image_path)
        index[sample_id] = [PatchRef(sample_id=sample_id, tile=t) for t in tile_grid(h, w, tile)]
    return index


def run_prepare(ctx: StageContext) -> list[Path]:
    data = ctx.config.data
    manifest = ctx.manifest
    split = split_dataset(manifest, data.ratios, seed=data.split_seed, stratify=data.stratify)
    index = None
    if data.subsample_unit is SubsampleUnit.PATCH and data.tile_size is not None:
        index = patch_index(manifest, split.train, data.tile_size)
    split = subsample_training(
        split, ctx.config.fraction, seed=ctx.seed, unit=data.subsample_unit, patch_index=index
    )
    path = ctx.path(SPLIT_NAME)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(split.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return [path]


# =============================================================================
# annotate
# =============================================================================


def expert_instances(sample: PatchSample, name: str) -> np.ndarray:
    if name in sample.instance_maps:
        return sample.instance_maps[name]
    mask = sample.class_masks.get(name, np.zeros(sample.shape, dtype=np.uint8))
    return instances_from_mask(mask)


def student_instances(ctx: StageContext, sample_id: str) -> tuple[dict[str, np.ndarray], bool]:
    """
    Lay-annotator instance maps of one sample and whether synthetic noise produced them.

    A recorded student label set is used as is; otherwise the expert instances go
    through the label-noise transform.
    """
    annotation = ctx.config.annotation
    record = ctx.manifest.get(sample_id)
    if STUDENT_SET in record.label_sets:
        sample = load_sample(ctx.manifest, sample_id, label_set=STUDENT_SET)
        empty = np.zeros(sample.shape, dtype=np.uint8)
        recorded = {n: instances_from_mask(sample.class_masks.get(n, empty)) for n in ctx.classes}
        return recorded, False

    sample = load_sample(ctx.manifest, sample_id)
    base = ctx.sample_seed(sample_id)
    noised = {
        name: apply_label_noise(
            expert_instances(sample, name),
            seed=base + offset,
            max_shift=annotation.noise_max_shift,
            dropout=annotation.noise_dropout,
        )
        for offset, name in enumerate(ctx.classes)
    }
    return noised, True


def labelled_sample_ids(split: SplitAssignment) -> list[str]:
    """Samples that need training labels: the training units' samples and val."""
    return sorted({sample_of(u) for u in split.train} | set(split.val))


def _backend(ctx: StageContext) -> PromptableBackend:
    annotation = ctx.config.annotation
    return load_checkpoint_backend(annotation.checkpoint, annotation.backend)


def _write_complete_labels(ctx: StageContext, sample_ids: list[str]) -> bool:
    """Pixel labels taken straight from the chosen tier; returns whether noise was used."""
    index: dict[str, Any] = {"backend": None, "classes": ctx.classes, "samples": {}}
    noisy = False
    for sample_id in sample_ids:
        if ctx.config.annotation.tier is AnnotatorTier.STUDENT:
            instances, used_noise = student_instances(ctx, sample_id)
            noisy = noisy or used_noise
        else:
            sample = load_sample(ctx.manifest, sample_id)
            instances = {n: expert_instances(sample, n) for n in ctx.classes}
        entry: dict[str, Any] = {"masks": {}}
        for name in ctx.classes:
            rel = Path("masks") / name / f"{sample_id}.png"
            imageio.write_mask(ctx.labels_dir / rel, instances[name] > 0)
            entry["masks"][name] = rel.as_posix()
        index["samples"][sample_id] = entry
    _write_json(ctx.labels_dir / INDEX_NAME, index)
    return noisy


def _write_weak_labels(ctx: StageContext, sample_ids: list[str]) -> bool:
    annotation = ctx.config.annotation
    mode = BoxSource.RANDOM if annotation.condition is Condition.WEAK_RANDOM else BoxSource.TIGHT
    noisy = False
    provider = None
    if annotation.tier is AnnotatorTier.STUDENT:

        def provider(sample: PatchSample) -> list[BoxAnnotation]:
            nonlocal noisy
            instances, used_noise = student_instances(ctx, sample.id)
            noisy = noisy or used_noise
            boxes: list[BoxAnnotation] = []
            for offset, name in enumerate(ctx.classes):
                boxes += boxes_from_mask(
                    instances[name],
                    mode,
                    jitter_frac=annotation.jitter_frac,
                    seed=ctx.sample_seed(sample.id) + offset,
                    class_name=name,
                )
            return boxes

    annotate_manifest(
        ctx.manifest,
        _backend(ctx),
        ctx.labels_dir,
        sample_ids=sample_ids,
        mode=mode,
        jitter_frac=annotation.jitter_frac,
        seed=ctx.seed,
        box_provider=provider,
    )
    return noisy


def run_annotate(ctx: StageContext) -> list[Path]:
    annotation = ctx.config.annotation
    sample_ids = labelled_sample_ids(ctx.split())
    if annotation.condition is Condition.COMPLETE:
        noisy = _write_complete_labels(ctx, sample_ids)
    else:
        noisy = _write_weak_labels(ctx, sample_ids)
    meta = _write_json(
        ctx.labels_dir / LABEL_META_NAME,
        {
            "condition": annotation.condition.value,
            "tier": annotation.tier.value,
            "label_noise": "synthetic" if noisy else "none",
            "samples": len(sample_ids),
        },
    )
    return [ctx.labels_dir / INDEX_NAME, meta]


# =============================================================================
# train / refine
# =============================================================================


def _seeded(hp: Hyperparams, seed: int) -> Hyperparams:
    return hp.model_copy(update={"seed": seed})


def build_datasets(ctx: StageContext) -> tuple[SegmentationDataset, SegmentationDataset]:
    split = ctx.split()
    model = ctx.config.model
    labels_dir = ctx.labels_dir
    classes = ctx.classes
    index = read_annotation_index(labels_dir)

    def targets(sample_id: str) -> np.ndarray:
        return load_annotation_masks(labels_dir, sample_id, classes, index)

    def dataset(units: list[str], tile_size: int | None) -> SegmentationDataset:
        return SegmentationDataset(
            ctx.manifest,
            units,
            classes,
            input_size=model.encoder.input_size,
            texture_sigma=model.adapter.texture_sigma,
            targets=targets,
            tile_size=tile_size,
        )

    return dataset(split.train, ctx.config.data.tile_size), dataset(split.val, None)


def run_train(ctx: StageContext) -> list[Path]:
    config = ctx.config
    train_data, val_data = build_datasets(ctx)
    logger.info(
        "training units",
        extra={"seed": ctx.seed, "units": len(train_data), "fraction": config.fraction},
    )
    state = build_model(
        config.model.encoder,
        config.model.adapter,
        len(ctx.classes),
        config=config.model,
        class_names=ctx.classes,
        seed=ctx.seed,
    )
    if config.model.backbone_checkpoint is not None:
        state = load_pretrained_backbone(state, config.model.backbone_checkpoint)

    objective = None
    if config.mocl.during_training:
        objective = MoclObjective(
            config.mocl.k, config.mocl.eps_floor, config.mocl.aggregation, ctx.classes
        )
    state, history = train_adapter(
        state, train_data, val_data, _seeded(config.train, ctx.seed), objective
    )
    checkpoint = state.save(ctx.path(TRAIN_CHECKPOINT))
    return [checkpoint, _write_json(ctx.path(HISTORY_NAME), history.to_json())]


def run_refine(ctx: StageContext) -> list[Path]:
    mocl = ctx.config.mocl
    train_data, val_data = build_datasets(ctx)
    state = ModelState.load(trained_checkpoint(ctx))
    state, history = refine(
        state,
        train_data,
        val_data,
        _seeded(mocl.hyperparams, ctx.seed),
        k=mocl.k,
        eps_floor=mocl.eps_floor,
        aggregation=mocl.aggregation,
    )
    checkpoint = state.save(ctx.path(REFINE_CHECKPOINT))
    return [checkpoint, _write_json(ctx.path(REFINE_HISTORY_NAME), history.to_json())]


# =============================================================================
# eval
# =============================================================================


def checkpoint_dir(path: Path) -> Path:
    """A checkpoint directory, given it or the checkpoint.pt inside it."""
    return path.parent if path.is_file() else path


def trained_checkpoint(ctx: StageContext) -> Path:
    if ctx.provided("train") and ctx.config.checkpoint is not None:
        return checkpoint_dir(ctx.config.checkpoint)
    return ctx.path(TRAIN_CHECKPOINT)


def final_checkpoint(ctx: StageContext) -> Path:
    """The refined model, or the trained one when refinement is disabled."""
    config = ctx.config
    if not config.mocl.enabled:
        return trained_checkpoint(ctx)
    if ctx.provided("refine") and config.checkpoint is not None:
        return checkpoint_dir(config.checkpoint)
    return ctx.path(REFINE_CHECKPOINT)


def run_eval(ctx: StageContext) -> list[Path]:
    config = ctx.config
    state = ModelState.load(final_checkpoint(ctx))
    sample_ids: list[str] = getattr(ctx.split(), config.eval_split)
    report = evaluate_split(state, ctx.manifest, sample_ids, config.metrics)
    label_meta = json.loads((ctx.labels_dir / LABEL_META_NAME).read_text(encoding="utf-8"))
    report.meta.update(
        {
            "name": config.name,
            "method": config.method,
            "label": config.label,
            "condition": config.annotation.condition.value,
            "tier": config.annotation.tier.value,
            "label_noise": label_meta["label_noise"],
            "fraction": config.fraction,
            "seed": ctx.seed,
            "split": config.eval_split,
        }
    )
    if config.checkpoint is not None:
        report.meta["checkpoint"] = str(config.checkpoint)
    return [report.save(ctx.path(METRICS_NAME))]


def _checkpoint_outputs(name: str, history: str) -> Callable[[StageContext], list[Path]]:
    return lambda ctx: [ctx.path(name) / "checkpoint.pt", ctx.path(history)]


STAGES: tuple[Stage, ...] = (
    Stage("prepare", lambda ctx: [ctx.path(SPLIT_NAME)], run_prepare),
    Stage(
        "annotate",
        lambda ctx: [ctx.labels_dir / INDEX_NAME, ctx.labels_dir / LABEL_META_NAME],
        run_annotate,
    ),
    Stage(
        "train",
        _checkpoint_outputs(TRAIN_CHECKPOINT, HISTORY_NAME),
        run_train,
        provided=lambda ctx: ctx.provided("train"),
    ),
    Stage(
        "refine",
        _checkpoint_outputs(REFINE_CHECKPOINT, REFINE_HISTORY_NAME),
        run_refine,
        enabled=lambda ctx: ctx.config.mocl.enabled,
        provided=lambda ctx: ctx.provided("refine"),
    ),
    Stage("eval", lambda ctx: [ctx.path(METRICS_NAME)], run_eval),
)
STAGE_NAMES = tuple(s.name for s in STAGES)


def load_seed_report(run_dir: Path) -> MetricsReport:
    return MetricsReport.load(run_dir / METRICS_NAME)
