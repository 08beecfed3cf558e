"""Pydantic data models for run configuration and score-file records."""

from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from .conformal import AggregationKind, config_fingerprint
from .core_types import U64_MAX
from .metrics import DEFAULT_EPSILONS, DEFAULT_TPR_LEVEL
from .model_zoo import Model, ModelKind
from .ncm import DISTRIBUTION_LOSSES, NcmConfig
from .transforms import FamilyId, TransformFamily

SCORE_FILE_VERSION = 1


class ScoreSplit(str, Enum):
    CAL = "cal"
    TEST_ID = "test_id"
    TEST_OOD = "test_ood"


class ScoreFileHeader(BaseModel):
    """First line of a score file."""

    format_version: int = Field(SCORE_FILE_VERSION, ge=1)
    n: int = Field(..., ge=1, description="Scores per record")

    @field_validator("format_version")
    @classmethod
    def validate_version(cls, v: int) -> int:
        if v > SCORE_FILE_VERSION:
            raise ValueError(f"Unsupported score file version {v}")
        return v


class ScoreFileRecord(BaseModel):
    """One externally computed score vector."""

    id: str = Field(..., min_length=1, description="Unique record identifier")
    split: ScoreSplit = Field(..., description="Which role the record plays")
    scores: List[float] = Field(..., min_length=1, description="Base scores V(x)")


class DataSource(str, Enum):
    SYNTHETIC = "synthetic"
    SCORE_FILE = "score_file"


class DataConfig(BaseModel):
    """Where points (or precomputed scores) come from."""

    source: DataSource = DataSource.SYNTHETIC
    score_file: Optional[Path] = None
    calibration_count: int = Field(1000, gt=0)
    training_count: int = Field(1000, gt=0, description="Proper-training points for k-NN")
    test_id_count: int = Field(1000, gt=0)
    test_ood_count: int = Field(1000, gt=0)
    id_radius_mean: float = 1.0
    id_radius_sd: float = Field(0.1, ge=0.0)
    ood_radius_mean: float = 3.0
    ood_radius_sd: float = Field(0.1, ge=0.0)

    @model_validator(mode="after")
    def validate_source(self) -> "DataConfig":
        if self.source is DataSource.SCORE_FILE and self.score_file is None:
            raise ValueError("score_file is required when source is score_file")
        return self


class SweepConfig(BaseModel):
    """Settings for the evaluate / fdr-sweep / pvalue-hist experiments."""

    n_values: List[int] = Field(default_factory=lambda: [1, 5, 20])
    replicates: int = Field(5, ge=1, description="Transform resamples per n")
    tpr_level: float = Field(DEFAULT_TPR_LEVEL, gt=0.0, le=1.0)
    fdr_cal_size: int = Field(1000, ge=1)
    fdr_replicates: int = Field(5, ge=1)
    fdr_pool_size: int = Field(5000, ge=1)
    fdr_held_out: int = Field(5000, ge=1)
    hist_calibration_count: int = Field(99, ge=1)
    hist_test_count: int = Field(5000, ge=1)
    hist_pool_size: int = Field(1000, ge=2)

    @model_validator(mode="after")
    def validate_hist_pool(self) -> "SweepConfig":
        if self.hist_pool_size < self.hist_calibration_count + 1:
            raise ValueError("hist_pool_size must exceed hist_calibration_count")
        return self

    @field_validator("n_values")
    @classmethod
    def validate_n_values(cls, v: List[int]) -> List[int]:
        if not v or any(n < 1 for n in v):
            raise ValueError("n_values must be a nonempty list of positive integers")
        return v


class RunConfig(BaseModel):
    """Full run configuration; CLI flags override individual fields."""

    family: TransformFamily = Field(
        default_factory=lambda: TransformFamily(family_id=FamilyId.ROTATION_2D)
    )
    model: Model = Field(default_factory=Model)
    ncm: NcmConfig = Field(default_factory=NcmConfig)
    n: int = Field(5, ge=1, description="Transforms per point")
    aggregation: AggregationKind = AggregationKind.SUM
    epsilons: List[float] = Field(default_factory=lambda: list(DEFAULT_EPSILONS))
    seed: Optional[int] = Field(None, ge=0, le=U64_MAX)
    smoothed: bool = False
    workers: int = Field(1, ge=1)
    data: DataConfig = Field(default_factory=DataConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    out: Path = Path("./output")
    artifact: Optional[Path] = None

    @field_validator("epsilons")
    @classmethod
    def validate_epsilons(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("At least one epsilon is required")
        for eps in v:
            if not 0.0 < eps < 1.0:
                raise ValueError(f"epsilon {eps} must lie strictly between 0 and 1")
        return v

    @model_validator(mode="after")
    def validate_distribution_loss(self) -> "RunConfig":
        if (
            self.ncm.loss_kind in DISTRIBUTION_LOSSES
            and not self.uses_external_scores
            and self.model.kind is not ModelKind.ROTATION_CLASS_SOFTMAX
        ):
            raise ValueError(
                f"{self.ncm.loss_kind.value} loss needs a model that predicts class "
                f"probabilities, got {self.model.kind.value}"
            )
        return self

    @property
    def uses_external_scores(self) -> bool:
        return (
            self.data.source is DataSource.SCORE_FILE
            or self.model.kind is ModelKind.EXTERNAL_SCORES
        )

    def fingerprint(self) -> str:
        """Configuration fingerprint stored in, and checked against, artifacts."""
        if self.uses_external_scores:
            return config_fingerprint(
                TransformFamily(), NcmConfig(), Model(kind=ModelKind.EXTERNAL_SCORES),
                self.aggregation,
            )
        return config_fingerprint(self.family, self.ncm, self.model, self.aggregation)

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Return a validated copy with top-level fields replaced."""
        merged = self.model_dump()
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.model_validate(merged)


def load_config(path: Optional[str]) -> RunConfig:
    """
    Read a JSON run configuration, or return defaults when no path is given.

    Raises:
        FileNotFoundError: If the config file doesn't exist
        ValidationError: If the config fails validation
    """
    if path is None:
        return RunConfig()
    config_path = Path(path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    return RunConfig.model_validate_json(config_path.read_text(encoding="utf-8"))
