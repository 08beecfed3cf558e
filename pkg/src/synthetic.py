"""Synthetic in-distribution (annulus) and OOD (ring) point generators."""

import math
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator

from .core_types import RngStream, Tensor, U64_MAX, as_tensor


class SyntheticKind(str, Enum):
    ANNULUS_ID = "annulus_id"
    RING_OOD = "ring_ood"


DEFAULT_RADIUS = {
    SyntheticKind.ANNULUS_ID: 1.0,
    SyntheticKind.RING_OOD: 3.0,
}


class SyntheticSpec(BaseModel):
    """Points r * (cos theta, sin theta) with theta uniform and r normal."""

    kind: SyntheticKind = SyntheticKind.ANNULUS_ID
    count: int = Field(..., gt=0)
    radius_mean: Optional[float] = Field(None, description="Defaults per kind")
    radius_sd: float = Field(0.1, ge=0.0)
    seed: int = Field(..., ge=0, le=U64_MAX)

    @model_validator(mode="after")
    def fill_radius(self) -> "SyntheticSpec":
        if self.radius_mean is None:
            self.radius_mean = DEFAULT_RADIUS[self.kind]
        if not math.isfinite(self.radius_mean):
            raise ValueError("radius_mean must be finite")
        return self


def generate(spec: SyntheticSpec) -> List[Tensor]:
    """Draw `count` 2-vectors; identical specs give identical output."""
    gen = RngStream(seed=spec.seed).generator()
    theta = gen.uniform(0.0, 2.0 * math.pi, size=spec.count)
    radius = gen.normal(spec.radius_mean, spec.radius_sd, size=spec.count)
    return [
        as_tensor((r * math.cos(t), r * math.sin(t)))
        for r, t in zip(radius, theta)
    ]
