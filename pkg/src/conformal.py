"""
Inductive conformal detection over aggregated equivariance scores.

Each point gets n transforms sampled IID from the family, one per derived
substream; its base scores form a score vector, the aggregation F reduces the
vector to one scalar, and calibration scalars turn test scalars into p-values.
"""

import hashlib
import json
import math
import sys
from bisect import bisect_left, bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .core_types import RngStream, Tensor, derive_stream
from .errors import (
    EmptyCalibration,
    EmptyVector,
    InvalidEpsilon,
    InvalidN,
    NonFiniteScore,
    TooFewScores,
)
from .model_zoo import Model
from .ncm import KnnFeatures, NcmConfig, base_ncm
from .transforms import TransformFamily, TransformInstance, sample_transform

FORMAT_VERSION = 1

# path roots for test-time draws; calibration points use their own index
TEST_STREAM = 2**64 - 1
SMOOTHING_STREAM = 2**64 - 2

SMOOTHED_FLOOR = sys.float_info.min

ProgressCallback = Callable[[int, int, str], None]


class AggregationKind(str, Enum):
    SUM = "sum"
    MEAN = "mean"
    MAX = "max"


class ScoreVector(BaseModel):
    """The n base scores of one point and the transforms that produced them."""

    model_config = ConfigDict(frozen=True)

    point_id: str
    scores: Tuple[float, ...]
    transforms: Tuple[TransformInstance, ...]

    @field_validator("transforms")
    @classmethod
    def validate_lengths(cls, v, info):
        scores = info.data.get("scores", ())
        if len(v) != len(scores):
            raise ValueError("scores and transforms must have equal length")
        if len(v) < 1:
            raise ValueError("score vector needs at least one entry")
        return v


class CalibrationArtifact(BaseModel):
    """Sorted aggregated calibration scores plus the configuration that produced them."""

    model_config = ConfigDict(frozen=True)

    format_version: int = FORMAT_VERSION
    n: int = Field(..., ge=1)
    seed: int = Field(..., ge=0)
    aggregation: AggregationKind = AggregationKind.SUM
    config_fingerprint: str
    sorted_scores: Tuple[float, ...]

    @field_validator("sorted_scores")
    @classmethod
    def validate_scores(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if len(v) == 0:
            raise ValueError("Calibration artifact needs k >= 1 scores")
        if not all(math.isfinite(s) for s in v):
            raise ValueError("Calibration scores must be finite")
        if any(a > b for a, b in zip(v, v[1:])):
            raise ValueError("Calibration scores must be sorted ascending")
        return v

    @property
    def k(self) -> int:
        return len(self.sorted_scores)


@dataclass(frozen=True)
class PValue:
    value: float
    smoothed: bool = False


@dataclass(frozen=True)
class DetectionResult:
    p: PValue
    epsilon: float
    is_ood: bool


def config_fingerprint(
    family: TransformFamily,
    cfg: NcmConfig,
    m: Model,
    aggregation: AggregationKind = AggregationKind.SUM,
) -> str:
    """Stable hash of everything that changes what a score means."""
    payload = {
        "family": family.model_dump(mode="json"),
        "ncm": cfg.model_dump(mode="json"),
        "model": m.model_dump(mode="json"),
        "aggregation": aggregation.value,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def score_vector(
    cfg: NcmConfig,
    m: Model,
    family: TransformFamily,
    x: Tensor,
    n: int,
    rng: RngStream,
    point_id: str = "",
    train_features: Optional[KnnFeatures] = None,
) -> ScoreVector:
    """
    Score x under n fresh transforms, transform i drawn from derive(rng, i).

    Raises:
        InvalidN: If n < 1
    """
    if n < 1:
        raise InvalidN(f"n must be at least 1, got {n}")
    transforms = tuple(sample_transform(family, derive_stream(rng, i)) for i in range(n))
    scores = tuple(base_ncm(cfg, m, x, g, train_features) for g in transforms)
    return ScoreVector(point_id=point_id, scores=scores, transforms=transforms)


def aggregate(kind: AggregationKind, v) -> float:
    """
    Reduce a score vector (or plain score sequence) to one aggregated score.

    Raises:
        EmptyVector: If there are no scores
    """
    scores = v.scores if isinstance(v, ScoreVector) else tuple(v)
    if len(scores) == 0:
        raise EmptyVector("Cannot aggregate an empty score vector")
    if kind is AggregationKind.SUM:
        return float(math.fsum(scores))
    if kind is AggregationKind.MEAN:
        return float(math.fsum(scores) / len(scores))
    return float(max(scores))


def score_points(
    points: Sequence[Tensor],
    cfg: NcmConfig,
    m: Model,
    family: TransformFamily,
    n: int,
    root: RngStream,
    aggregation: AggregationKind = AggregationKind.SUM,
    train_features: Optional[KnnFeatures] = None,
    workers: int = 1,
    on_progress: Optional[ProgressCallback] = None,
) -> List[float]:
    """
    Aggregated scores for many points, point j scored under derive(root, j).

    Output does not depend on `workers`.
    """
    total = len(points)

    def score_one(j: int) -> float:
        v = score_vector(
            cfg, m, family, points[j], n, derive_stream(root, j),
            point_id=str(j), train_features=train_features,
        )
        return aggregate(aggregation, v)

    results: List[float] = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for j, score in enumerate(pool.map(score_one, range(total)), start=1):
                results.append(score)
                if on_progress:
                    on_progress(j, total, "scored")
    else:
        for j in range(total):
            results.append(score_one(j))
            if on_progress:
                on_progress(j + 1, total, "scored")
    return results


def build_artifact(
    scores: Sequence[float],
    n: int,
    seed: int,
    fingerprint: str,
    aggregation: AggregationKind = AggregationKind.SUM,
) -> CalibrationArtifact:
    """Freeze aggregated calibration scores into an artifact."""
    if len(scores) == 0:
        raise EmptyCalibration("Calibration set is empty")
    if not all(math.isfinite(s) for s in scores):
        raise NonFiniteScore("Calibration scores must be finite")
    return CalibrationArtifact(
        n=n,
        seed=seed,
        aggregation=aggregation,
        config_fingerprint=fingerprint,
        sorted_scores=tuple(sorted(float(s) for s in scores)),
    )


def calibrate(
    points: Sequence[Tensor],
    cfg: NcmConfig,
    m: Model,
    family: TransformFamily,
    n: int,
    seed: int,
    aggregation: AggregationKind = AggregationKind.SUM,
    train_features: Optional[KnnFeatures] = None,
    workers: int = 1,
    on_progress: Optional[ProgressCallback] = None,
) -> CalibrationArtifact:
    """
    Score every calibration point and freeze the sorted aggregated scores.

    Point j uses substream derive(RngStream(seed), j).

    Raises:
        EmptyCalibration: If no points are given
    """
    if len(points) == 0:
        raise EmptyCalibration("Calibration set is empty")
    scores = score_points(
        points, cfg, m, family, n, RngStream(seed=seed),
        aggregation=aggregation, train_features=train_features,
        workers=workers, on_progress=on_progress,
    )
    return build_artifact(
        scores, n, seed, config_fingerprint(family, cfg, m, aggregation), aggregation
    )


def detection_stream(seed: int) -> RngStream:
    """Root stream for scoring test points, disjoint from calibration streams."""
    return RngStream(seed=seed, path=(TEST_STREAM,))


def smoothing_stream(seed: int) -> RngStream:
    return RngStream(seed=seed, path=(SMOOTHING_STREAM,))


def _check_score(test_score: float) -> None:
    if not math.isfinite(test_score):
        raise NonFiniteScore(f"Test score must be finite, got {test_score}")


def p_value(art: CalibrationArtifact, test_score: float) -> PValue:
    """(#{calibration scores >= test} + 1) / (k + 1), by binary search."""
    _check_score(test_score)
    at_least = art.k - bisect_left(art.sorted_scores, test_score)
    return PValue(value=(at_least + 1) / (art.k + 1))


def p_values(art: CalibrationArtifact, test_scores: Sequence[float]) -> np.ndarray:
    """Vectorised p_value over many test scores."""
    scores = np.asarray(test_scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise NonFiniteScore("Test scores must be finite")
    cal = np.asarray(art.sorted_scores)
    at_least = art.k - np.searchsorted(cal, scores, side="left")
    return (at_least + 1) / (art.k + 1)


def p_value_smoothed(art: CalibrationArtifact, test_score: float, u: float) -> PValue:
    """
    Tie-randomised p-value (#{> test} + u * (#{= test} + 1)) / (k + 1).

    A result of exactly 0 is floored to the smallest positive normal float.
    """
    _check_score(test_score)
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    lo = bisect_left(art.sorted_scores, test_score)
    hi = bisect_right(art.sorted_scores, test_score)
    greater = art.k - hi
    value = (greater + u * (hi - lo + 1)) / (art.k + 1)
    return PValue(value=max(value, SMOOTHED_FLOOR), smoothed=True)


def detect(
    art: CalibrationArtifact,
    test_score: float,
    epsilon: float,
    u: Optional[float] = None,
) -> DetectionResult:
    """
    Flag a test score as OOD iff its p-value is strictly below epsilon.

    Args:
        art: Calibration artifact
        test_score: Aggregated test score
        epsilon: Threshold in (0, 1)
        u: Smoothing draw; the smoothed p-value is used when given

    Raises:
        InvalidEpsilon: If epsilon is outside (0, 1)
    """
    if not 0.0 < epsilon < 1.0:
        raise InvalidEpsilon(f"epsilon must lie in (0, 1), got {epsilon}")
    p = p_value(art, test_score) if u is None else p_value_smoothed(art, test_score, u)
    return DetectionResult(p=p, epsilon=epsilon, is_ood=p.value < epsilon)


def cad_p_value(all_scores: Sequence[float]) -> PValue:
    """
    Full conformal anomaly detection p-value; the last score is the test score.

    Raises:
        TooFewScores: If fewer than two scores are given
    """
    if len(all_scores) < 2:
        raise TooFewScores("Need at least one calibration score and the test score")
    *others, test = all_scores
    for s in all_scores:
        _check_score(s)
    count = sum(1 for s in others if s >= test)
    return PValue(value=(count + 1) / len(all_scores))
