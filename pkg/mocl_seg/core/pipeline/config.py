"""
Experiment configuration loading.

A user file (YAML, or TOML by suffix) is deep-merged over the packaged
configs/default.yaml, dotted `key.path=value` overrides are applied last and the
result is validated into ExperimentConfig.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from enum import Enum
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator

from mocl_seg.core.annotate.models import BackendConfig
from mocl_seg.core.data.models import SubsampleUnit
from mocl_seg.core.errors import ConfigError
from mocl_seg.core.metrics.report import MetricConfig
from mocl_seg.core.mocl.maps import Aggregation
from mocl_seg.core.model.config import Hyperparams, ModelConfig

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parents[2] / "configs" / "default.yaml"
HASH_EXCLUDE = frozenset({"output_dir"})


class Condition(Enum):
    """Label condition of the training set."""

    COMPLETE = "complete"
    WEAK_TIGHT = "weak_tight"
    WEAK_RANDOM = "weak_random"


class AnnotatorTier(Enum):
    EXPERT = "expert"
    STUDENT = "student"


class CheckpointStage(Enum):
    """Last model stage an existing checkpoint stands in for."""

    TRAIN = "train"  # refine starts from it
    REFINE = "refine"  # evaluated as is


class DataConfig(BaseModel, frozen=True):
    root: Path = Path("data/synthetic")
    manifest: str = "manifest.json"
    ratios: tuple[int, int, int] = (6, 1, 3)
    stratify: bool = False
    split_seed: int = 42
    tile_size: int | None = Field(default=None, gt=0)
    subsample_unit: SubsampleUnit = SubsampleUnit.PATCH
    if_min_size: int = Field(default=10, ge=0)


class SyntheticConfig(BaseModel, frozen=True):
    n_patches: int = Field(default=64, ge=1)
    classes: list[str] = Field(default_factory=lambda: ["podocyte", "mesangial"])
    image_size: int = Field(default=128, gt=0)
    seed: int = 42


class AnnotationConfig(BaseModel, frozen=True):
    condition: Condition = Condition.WEAK_TIGHT
    tier: AnnotatorTier = AnnotatorTier.EXPERT
    backend: BackendConfig = Field(default_factory=BackendConfig)
    checkpoint: Path | None = None
    jitter_frac: float = Field(default=0.1, ge=0)
    noise_max_shift: int = Field(default=2, ge=0)
    noise_dropout: float = Field(default=0.1, ge=0, le=1)


class MoclConfig(BaseModel, frozen=True):
    enabled: bool = True
    during_training: bool = False
    k: int = Field(default=64, ge=1)
    eps_floor: float = Field(default=0.05, ge=0)
    aggregation: Aggregation = Aggregation.MEAN_COSINE
    hyperparams: Hyperparams = Field(
        default_factory=lambda: Hyperparams(learning_rate=1e-4, epochs=20, patience=10)
    )


class ExperimentConfig(BaseModel, frozen=True):
    """One experiment: data, labels, model, training, refinement and evaluation."""

    name: str = "default"
    output_dir: Path = Path("runs/default")
    data: DataConfig = Field(default_factory=DataConfig)
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)
    annotation: AnnotationConfig = Field(default_factory=AnnotationConfig)
    fraction: float = Field(default=1.0, gt=0, le=1)
    seeds: list[int] = Field(default_factory=lambda: [42], min_length=1)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: Hyperparams = Field(default_factory=Hyperparams)
    mocl: MoclConfig = Field(default_factory=MoclConfig)
    metrics: MetricConfig = Field(default_factory=MetricConfig)
    eval_split: str = "test"
    checkpoint: Path | None = None
    checkpoint_stage: CheckpointStage = CheckpointStage.TRAIN

    @field_validator("eval_split")
    @classmethod
    def _check_split(cls, value: str) -> str:
        if value not in ("train", "val", "test"):
            raise ValueError(f"eval_split must be train, val or test, got '{value}'")
        return value

    @property
    def provided_stages(self) -> tuple[str, ...]:
        """Model stages whose output is `checkpoint` instead of a run of the stage."""
        if self.checkpoint is None:
            return ()
        if self.checkpoint_stage is CheckpointStage.TRAIN:
            return ("train",)
        return ("train", "refine")

    @property
    def method(self) -> str:
        return "adapter+mocl" if self.mocl.enabled else "adapter"

    @property
    def label(self) -> str:
        return f"{self.annotation.condition.value}/{self.annotation.tier.value}"


# =============================================================================
# Loading
# =============================================================================


def deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Recursively merge override into a copy of base; non-dict values replace."""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_config_file(path: Path) -> dict[str, Any]:
    """
    Read a YAML or TOML config file into a dict.

    Raises:
        FileNotFoundError: file missing
        ConfigError: unparsable content or non-mapping top level
    """
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        if path.suffix.lower() == ".toml":
            with path.open("rb") as f:
                data = tomllib.load(f)
        else:
            with path.open(encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
    except (yaml.YAMLError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def parse_override(item: str) -> dict[str, Any]:
    """Turn 'a.b.c=value' into {'a': {'b': {'c': value}}} (value parsed as YAML)."""
    if "=" not in item:
        raise ConfigError(f"override must look like key.path=value, got '{item}'")
    key, raw = item.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"empty key in override '{item}'")
    try:
        value: Any = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    for part in reversed(parts):
        value = {part: value}
    return value  # type: ignore[no-any-return]


def build_config(data: dict[str, Any], overrides: list[str] | None = None) -> ExperimentConfig:
    """
    Merge data over the defaults, apply overrides and validate.

    Raises:
        ConfigError: validation failure (message lists every invalid field)
    """
    merged = deep_merge(read_config_file(DEFAULT_CONFIG_PATH), data)
    for item in overrides or []:
        merged = deep_merge(merged, parse_override(item))
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}") from None


def load_config(path: Path | None = None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Load a config file (or $MOCL_SEG_CONFIG, or only the defaults)."""
    if path is None and os.environ.get("MOCL_SEG_CONFIG"):
        path = Path(os.environ["MOCL_SEG_CONFIG"])
    data = read_config_file(path) if path is not None else {}
    config = build_config(data, overrides)
    logger.debug("loaded config", extra={"path": str(path), "hash": config_hash(config)})
    return config


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON of every semantic field."""
    payload = config.model_dump(mode="json", exclude=set(HASH_EXCLUDE))
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def dump_config(config: ExperimentConfig) -> str:
    """YAML text of a config, used for the `config` sidecar of runs."""
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)
