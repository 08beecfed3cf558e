"""
Synthetic models M that are equivariant on the in-distribution annulus.

Each model is rotation-equivariant (or invariant) exactly when the input lies
inside the annulus r_lo <= |x| <= r_hi and breaks that behaviour outside it.
"""

import hashlib
import math
from enum import Enum
from typing import Dict, Iterable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import ndtri, softmax

from .core_types import Tensor
from .errors import DuplicateId, IncompatibleShape, SchemaViolation, WrongModelKind
from .transforms import NUM_QUARTERS, quarter_matrix


class ModelKind(str, Enum):
    ANNULUS_INVARIANT = "annulus_invariant"
    ANGLE_PREDICTOR = "angle_predictor"
    ROTATION_CLASS_SOFTMAX = "rotation_class_softmax"
    EXTERNAL_SCORES = "external_scores"


class Model(BaseModel):
    """Model selection and parameters."""

    model_config = ConfigDict(frozen=True)

    kind: ModelKind = ModelKind.ANNULUS_INVARIANT
    r_lo: float = Field(0.5, ge=0.0, description="Inner annulus radius")
    r_hi: float = Field(1.5, gt=0.0, description="Outer annulus radius")
    beta: float = Field(50.0, ge=0.0, description="Softmax sharpness inside the annulus")
    noise_sd: float = Field(
        0.0, ge=0.0, description="Deterministic additive output noise (AnnulusInvariant)"
    )
    noise_seed: int = Field(0, ge=0, le=2**64 - 1, description="Salt for the output-noise hash")

    @model_validator(mode="after")
    def validate_annulus(self) -> "Model":
        if self.r_lo > self.r_hi:
            raise ValueError("r_lo must not exceed r_hi")
        return self

    def in_annulus(self, x: Tensor) -> bool:
        r = float(np.hypot(x[0], x[1]))
        return self.r_lo <= r <= self.r_hi


def _require_vector(x: Tensor) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (2,):
        raise IncompatibleShape(f"Model input must have shape (2,), got {x.shape}")
    return x


def _hashed_normal(x: np.ndarray, salt: int) -> float:
    """Standard normal value that is a pure function of the input bytes."""
    digest = hashlib.blake2b(
        x.tobytes(), digest_size=8, key=salt.to_bytes(8, "little")
    ).digest()
    u = (int.from_bytes(digest, "little") + 0.5) / 2**64
    return float(ndtri(u))


def evaluate(m: Model, x: Tensor) -> Tensor:
    """
    Evaluate M(x).

    AnnulusInvariant returns (|x|) inside the annulus and (x_1) outside, plus
    optional hashed noise.

    Raises:
        IncompatibleShape: If x is not a 2-vector
        WrongModelKind: For models without a forward output
    """
    if m.kind is not ModelKind.ANNULUS_INVARIANT:
        raise WrongModelKind(f"{m.kind.value} has no evaluate output")
    x = _require_vector(x)
    value = float(np.hypot(x[0], x[1])) if m.in_annulus(x) else float(x[0])
    if m.noise_sd > 0:
        value += m.noise_sd * _hashed_normal(x, m.noise_seed)
    return np.array([value])


def predict_transform(m: Model, x: Tensor, gx: Tensor) -> Tensor:
    """
    Predict which transform maps x to gx.

    Returns:
        AnglePredictor: (delta_theta) in [0, 2*pi), or (0) outside the annulus.
        RotationClassSoftmax: softmax over quarter-turn classes.

    Raises:
        IncompatibleShape: If x or gx is not a 2-vector
        WrongModelKind: For models that do not predict transforms
    """
    x = _require_vector(x)
    gx = _require_vector(gx)
    inside = m.in_annulus(x)

    if m.kind is ModelKind.ANGLE_PREDICTOR:
        if not inside:
            return np.zeros(1)
        delta = math.atan2(gx[1], gx[0]) - math.atan2(x[1], x[0])
        return np.array([delta % (2 * math.pi)])

    if m.kind is ModelKind.ROTATION_CLASS_SOFTMAX:
        dists = np.array([
            float(np.sum((gx - quarter_matrix(c) @ x) ** 2)) for c in range(NUM_QUARTERS)
        ])
        beta = m.beta if inside else 0.0
        return softmax(-beta * dists)

    raise WrongModelKind(f"{m.kind.value} does not predict transforms")


def ingest_external(records: Iterable, n: int) -> Dict[str, np.ndarray]:
    """
    Load externally computed score vectors into an id -> scores table.

    Args:
        records: Score-file records (objects with `id` and `scores`)
        n: Declared number of scores per record

    Raises:
        SchemaViolation: If a record's length differs from n
        DuplicateId: If an id repeats
    """
    table: Dict[str, np.ndarray] = {}
    for position, record in enumerate(records, start=1):
        if len(record.scores) != n:
            raise SchemaViolation(
                [(position, f"expected {n} scores, got {len(record.scores)}")]
            )
        if record.id in table:
            raise DuplicateId(record.id, position)
        table[record.id] = np.asarray(record.scores, dtype=np.float64)
    return table
