"""
Error models.

Every failure raised by mocl-seg carries a code from the MSEG-XXX-NNN taxonomy.
Error domains:
- MSEG-CFG-*: Configuration errors
- MSEG-DATA-*: Manifest, split, subsample and tiling errors
- MSEG-ANN-*: Box annotation and backend errors
- MSEG-MODEL-*: Model config, checkpoint and training errors
- MSEG-MOCL-*: Corrective learning errors
- MSEG-MET-*: Metric and statistics errors
- MSEG-RUN-*: Pipeline stage errors
"""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field


class MoclSegError(Exception):
    """Base class for all mocl-seg errors."""

    code: str = "MSEG-RUN-000"

    def __init__(self, message: str, *, context: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.context = context or {}

    def to_record(self, stage: str | None = None) -> ErrorRecord:
        """Convert to a serializable record."""
        return ErrorRecord(
            code=self.code,
            title=get_error_description(self.code) or type(self).__name__,
            message=self.message,
            stage=stage,
            context={k: str(v) for k, v in self.context.items()},
        )

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


class ValidationError(MoclSegError):
    """Input violates a documented precondition or invariant."""


# =============================================================================
# Configuration
# =============================================================================


class ConfigError(ValidationError):
    code = "MSEG-CFG-001"


# =============================================================================
# Data ingest
# =============================================================================


class ManifestError(ValidationError):
    code = "MSEG-DATA-001"

    def __init__(
        self,
        message: str,
        *,
        sample_id: str | None = None,
        context: dict[str, Any] | None = None,
    ) -> None:
        ctx = dict(context or {})
        if sample_id is not None:
            ctx["sample_id"] = sample_id
            message = f"sample '{sample_id}': {message}"
        super().__init__(message, context=ctx)
        self.sample_id = sample_id


class SplitError(ValidationError):
    code = "MSEG-DATA-002"


class StratificationError(SplitError):
    code = "MSEG-DATA-003"


class SubsampleError(ValidationError):
    code = "MSEG-DATA-004"


class TilingError(ValidationError):
    code = "MSEG-DATA-005"


class MaskParameterError(ValidationError):
    code = "MSEG-DATA-006"


# =============================================================================
# Annotation
# =============================================================================


class AnnotationError(ValidationError):
    code = "MSEG-ANN-001"


class BoxBoundsError(AnnotationError):
    code = "MSEG-ANN-002"


class BackendLoadError(MoclSegError):
    code = "MSEG-ANN-003"


# =============================================================================
# Model
# =============================================================================


class ModelConfigError(ConfigError):
    code = "MSEG-MODEL-001"


class CheckpointError(MoclSegError):
    code = "MSEG-MODEL-002"


class TrainingError(MoclSegError):
    code = "MSEG-MODEL-003"

    def __init__(self, message: str, *, epoch: int, context: dict[str, Any] | None = None) -> None:
        super().__init__(f"epoch {epoch}: {message}", context={**(context or {}), "epoch": epoch})
        self.epoch = epoch


class ShapeError(ValidationError):
    code = "MSEG-MODEL-004"


# =============================================================================
# Corrective learning
# =============================================================================


class EmptyAnnotationError(ValidationError):
    code = "MSEG-MOCL-001"


class EmptySelectionError(ValidationError):
    code = "MSEG-MOCL-002"


class DegenerateWeightsError(ValidationError):
    code = "MSEG-MOCL-003"


class RefinementError(MoclSegError):
    code = "MSEG-MOCL-004"


# =============================================================================
# Metrics
# =============================================================================


class MetricShapeError(ValidationError):
    code = "MSEG-MET-001"


class UndefinedMetricError(ValidationError):
    code = "MSEG-MET-002"


class DegenerateSampleError(ValidationError):
    code = "MSEG-MET-003"


class ComparisonError(ValidationError):
    code = "MSEG-MET-004"


# =============================================================================
# Pipeline
# =============================================================================


class StageError(MoclSegError):
    """A pipeline stage failed; wraps the underlying cause."""

    code = "MSEG-RUN-001"

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"stage '{stage}' failed: {cause}", context={"stage": stage})
        self.stage = stage
        self.cause = cause


class ErrorRecord(BaseModel, frozen=True):
    """Serializable failure, stored in run records."""

    code: str = Field(pattern=r"^MSEG-[A-Z]{2,5}-\d{3}$")
    title: str
    message: str
    stage: str | None = None
    context: dict[str, str] = Field(default_factory=dict)

    def __str__(self) -> str:
        where = f" ({self.stage})" if self.stage else ""
        return f"[{self.code}]{where} {self.title} - {self.message}"


# =============================================================================
# Error Codes Registry
# =============================================================================

ERROR_CODES: dict[str, str] = {
    "MSEG-CFG-001": "Invalid configuration",
    "MSEG-DATA-001": "Invalid dataset manifest",
    "MSEG-DATA-002": "Invalid split request",
    "MSEG-DATA-003": "Stratum too small to stratify",
    "MSEG-DATA-004": "Invalid training subsample",
    "MSEG-DATA-005": "Tile larger than image",
    "MSEG-DATA-006": "Invalid mask or box parameter",
    "MSEG-ANN-001": "Invalid box annotation",
    "MSEG-ANN-002": "Box outside image bounds",
    "MSEG-ANN-003": "Promptable backend could not be loaded",
    "MSEG-MODEL-001": "Invalid model configuration",
    "MSEG-MODEL-002": "Checkpoint missing or incompatible",
    "MSEG-MODEL-003": "Training diverged",
    "MSEG-MODEL-004": "Input shape does not fit the model",
    "MSEG-MOCL-001": "No annotated pixels for class",
    "MSEG-MOCL-002": "Empty top-k selection",
    "MSEG-MOCL-003": "Loss weights sum to zero",
    "MSEG-MOCL-004": "Refinement impossible, every image skipped",
    "MSEG-MET-001": "Metric inputs differ in shape",
    "MSEG-MET-002": "Metric undefined for single-class ground truth",
    "MSEG-MET-003": "All paired differences are zero",
    "MSEG-MET-004": "Reports cannot be compared",
    "MSEG-RUN-000": "Unexpected error",
    "MSEG-RUN-001": "Pipeline stage failed",
}


def get_error_description(code: str) -> str | None:
    """Get the description for an error code."""
    return ERROR_CODES.get(code)
