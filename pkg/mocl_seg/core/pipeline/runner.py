"""
Pipeline orchestration: prepare -> annotate -> train -> refine -> eval, per seed.

Stages are resumable: a stage whose outputs exist is skipped unless forced, and once
a stage runs every later stage of that seed runs too. Any stage error aborts the run
as a StageError; run.json and all artifacts written so far stay on disk. A configured
`checkpoint` stands in for the train stage (or train and refine), which are then not run.
"""

from __future__ import annotations

import logging
import platform
from datetime import datetime, timezone

UTC = timezone.utc
from pathlib import Path

import numpy as np
import torch

import mocl_seg
from mocl_seg.core.errors import ConfigError, MoclSegError, StageError
from mocl_seg.core.metrics.report import MetricsReport
from mocl_seg.core.model.state import default_device
from mocl_seg.core.pipeline.config import ExperimentConfig, config_hash, dump_config
from mocl_seg.core.pipeline.models import RunRecord, StageRecord, StageStatus
from mocl_seg.core.pipeline.stages import (
    METRICS_NAME,
    STAGE_NAMES,
    STAGES,
    Stage,
    StageContext,
    load_seed_report,
)

logger = logging.getLogger(__name__)

RUN_RECORD_NAME = "run.json"
CONFIG_NAME = "config.yaml"


def environment_fingerprint() -> dict[str, str]:
    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "mocl_seg": mocl_seg.__version__,
        "numpy": np.__version__,
        "torch": torch.__version__,
        "device": str(default_device()),
    }


def seed_dir(config: ExperimentConfig, seed: int) -> Path:
    return config.output_dir / f"seed-{seed}"


def _check_output_dir(config: ExperimentConfig, digest: str, force: bool) -> None:
    record_path = config.output_dir / RUN_RECORD_NAME
    if force or not record_path.exists():
        return
    previous = RunRecord.load(record_path).config_hash
    if previous != digest:
        raise ConfigError(
            f"{config.output_dir} holds a run of a different configuration; "
            "use another output_dir or --force",
            context={"expected": previous, "got": digest},
        )


def _stages_until(until: str | None) -> tuple[Stage, ...]:
    if until is None:
        return STAGES
    if until not in STAGE_NAMES:
        raise ConfigError(f"unknown stage '{until}', expected one of {', '.join(STAGE_NAMES)}")
    return STAGES[: STAGE_NAMES.index(until) + 1]


def _run_seed(
    ctx: StageContext, stages: tuple[Stage, ...], record: RunRecord, force: bool
) -> None:
    dirty = force
    for stage in stages:
        if stage.provided(ctx):
            record.stages.append(
                StageRecord(
                    name=stage.name,
                    seed=ctx.seed,
                    status=StageStatus.PROVIDED,
                    artifacts=[str(ctx.config.checkpoint)],
                )
            )
            continue
        if not stage.enabled(ctx):
            record.stages.append(
                StageRecord(name=stage.name, seed=ctx.seed, status=StageStatus.DISABLED)
            )
            continue
        if not dirty and stage.done(ctx):
            logger.info("stage skipped", extra={"stage": stage.name, "seed": ctx.seed})
            record.stages.append(
                StageRecord(
                    name=stage.name,
                    seed=ctx.seed,
                    status=StageStatus.SKIPPED,
                    artifacts=[str(p) for p in stage.outputs(ctx)],
                )
            )
            continue

        dirty = True
        started = datetime.now(UTC)
        logger.info("stage started", extra={"stage": stage.name, "seed": ctx.seed})
        try:
            artifacts = stage.run(ctx)
        except Exception as e:
            error = StageError(stage.name, e)
            cause = e if isinstance(e, MoclSegError) else error
            record.stages.append(
                StageRecord(
                    name=stage.name,
                    seed=ctx.seed,
                    status=StageStatus.FAILED,
                    started_at=started,
                    finished_at=datetime.now(UTC),
                    error=cause.to_record(stage.name),
                )
            )
            logger.error(
                "stage failed", extra={"stage": stage.name, "seed": ctx.seed, "error": str(e)}
            )
            raise error from e

        record.stages.append(
            StageRecord(
                name=stage.name,
                seed=ctx.seed,
                status=StageStatus.EXECUTED,
                started_at=started,
                finished_at=datetime.now(UTC),
                artifacts=[str(p) for p in artifacts],
            )
        )
        logger.info("stage finished", extra={"stage": stage.name, "seed": ctx.seed})


def average_reports(reports: list[MetricsReport], seeds: list[int]) -> MetricsReport:
    """Per-image means over seeds of every metric present in all reports."""
    merged = MetricsReport(meta={k: v for k, v in reports[0].meta.items() if k != "seed"})
    merged.meta["seeds"] = list(seeds)
    for image_id in sorted(reports[0].per_image):
        keys = set(reports[0].per_image[image_id])
        for report in reports[1:]:
            keys &= set(report.per_image.get(image_id, {}))
        merged.per_image[image_id] = {
            key: float(np.mean([r.per_image[image_id][key] for r in reports]))
            for key in sorted(keys)
        }
    merged.recompute_aggregate()
    return merged


def run_pipeline(
    config: ExperimentConfig, *, force: bool = False, until: str | None = None
) -> RunRecord:
    """
    Run every stage (or the stages up to `until`) for each configured seed.

    Raises:
        ConfigError: output_dir holds a run of another config, `until` is unknown, or
            the configured checkpoint does not exist
        StageError: a stage failed (the record is still written)
    """
    stages = _stages_until(until)
    if config.checkpoint is not None and not config.checkpoint.exists():
        raise ConfigError(f"checkpoint not found: {config.checkpoint}")
    digest = config_hash(config)
    _check_output_dir(config, digest, force)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    (config.output_dir / CONFIG_NAME).write_text(dump_config(config), encoding="utf-8")

    record = RunRecord(
        name=config.name,
        config_hash=digest,
        output_dir=config.output_dir,
        environment=environment_fingerprint(),
    )
    logger.info(
        "pipeline started",
        extra={"run": config.name, "hash": digest[:12], "seeds": config.seeds},
    )
    try:
        for seed in config.seeds:
            ctx = StageContext(config=config, seed=seed, run_dir=seed_dir(config, seed))
            _run_seed(ctx, stages, record, force)
        if stages[-1].name == "eval":
            reports = [load_seed_report(seed_dir(config, s)) for s in config.seeds]
            record.metrics_path = average_reports(reports, config.seeds).save(
                config.output_dir / METRICS_NAME
            )
    finally:
        record.finished_at = datetime.now(UTC)
        record.save(config.output_dir / RUN_RECORD_NAME)
    logger.info(
        "pipeline finished",
        extra={"run": config.name, "executed": len(record.executed())},
    )
    return record


def load_run_report(output_dir: Path) -> MetricsReport:
    """Seed-averaged metrics of a finished run."""
    path = output_dir / METRICS_NAME
    if not path.exists():
        raise FileNotFoundError(f"no metrics in {output_dir}; run the eval stage first")
    return MetricsReport.load(path)
