"""Shared value types: tensors, seeded random streams and dataset splits."""

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import NonFinite, ShapeMismatch

U64_MAX = 2**64 - 1

Tensor = np.ndarray


def validate_tensor(shape: Sequence[int], data: Iterable[float]) -> Tensor:
    """
    Build a read-only float64 tensor from a shape and flat row-major data.

    Args:
        shape: Positive dimensions
        data: Flat row-major element values

    Returns:
        Tensor of the given shape

    Raises:
        ShapeMismatch: If the data length differs from the product of the shape
        NonFinite: If any element is NaN or infinite
    """
    shape = tuple(int(d) for d in shape)
    if any(d <= 0 for d in shape):
        raise ShapeMismatch(f"Shape entries must be positive, got {list(shape)}")

    if not isinstance(data, np.ndarray):
        data = list(data)
    flat = np.array(data, dtype=np.float64).ravel()
    expected = math.prod(shape)
    if flat.size != expected:
        raise ShapeMismatch(
            f"Shape {list(shape)} needs {expected} elements, got {flat.size}"
        )
    if not np.all(np.isfinite(flat)):
        raise NonFinite("Tensor contains NaN or infinite values")

    tensor = flat.reshape(shape)
    tensor.setflags(write=False)
    return tensor


def as_tensor(x) -> Tensor:
    """Validate an already-shaped array-like and return it as a tensor."""
    arr = np.asarray(x, dtype=np.float64)
    return validate_tensor(arr.shape, arr)


class RngStream(BaseModel):
    """
    Seeded, counter-derived random stream.

    A stream is identified by (seed, path) only; draws come from a fresh
    generator so the same stream always replays the same sequence.
    """

    model_config = ConfigDict(frozen=True)

    seed: int = Field(..., ge=0, le=U64_MAX)
    path: Tuple[int, ...] = ()

    @field_validator("path")
    @classmethod
    def validate_path(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(i < 0 or i > U64_MAX for i in v):
            raise ValueError("Path indices must be unsigned 64-bit integers")
        return v

    def generator(self) -> np.random.Generator:
        """Return a new PCG64 generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(seq))

    def draws(self) -> "StreamDraws":
        return StreamDraws(self.generator())


class StreamDraws:
    """Cursor over one stream exposing the two primitive draws."""

    def __init__(self, gen: np.random.Generator):
        self._gen = gen

    def next_f64(self) -> float:
        """Uniform draw in [0, 1)."""
        return float(self._gen.random())

    def next_u64(self) -> int:
        return int(self._gen.bit_generator.random_raw())


def derive_stream(root: RngStream, index: int) -> RngStream:
    """Return the child stream of `root` at `index`."""
    return RngStream(seed=root.seed, path=root.path + (index,))


def derive_seed(stream: RngStream) -> int:
    """Draw a 64-bit seed from a stream, for handing to seed-taking APIs."""
    return stream.draws().next_u64()


@dataclass(frozen=True)
class DatasetSplit:
    """Proper training / calibration / held-out partition of a dataset."""

    proper_training: List[Tensor]
    calibration: List[Tensor]
    held_out: List[Tensor]

    def __post_init__(self):
        seen = set()
        for part in (self.proper_training, self.calibration, self.held_out):
            ids = {id(x) for x in part}
            if ids & seen:
                raise ValueError("Dataset splits must be disjoint")
            seen |= ids


def split_points(
    points: Sequence[Tensor],
    n_train: int,
    n_cal: int,
    stream: RngStream,
) -> DatasetSplit:
    """
    Randomly partition points into proper-training, calibration and held-out.

    Raises:
        ValueError: If the requested sizes exceed the number of points
    """
    if n_train < 0 or n_cal < 0 or n_train + n_cal > len(points):
        raise ValueError(
            f"Cannot take {n_train} training and {n_cal} calibration points "
            f"from {len(points)}"
        )
    order = stream.generator().permutation(len(points))
    shuffled = [points[i] for i in order]
    return DatasetSplit(
        proper_training=shuffled[:n_train],
        calibration=shuffled[n_train:n_train + n_cal],
        held_out=shuffled[n_train + n_cal:],
    )
