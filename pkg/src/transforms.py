"""Transformation families G, their uniform samplers Q_G, and output transforms g'."""

import math
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import ndimage

from .core_types import RngStream, Tensor
from .errors import IncompatibleShape


class FamilyId(str, Enum):
    IDENTITY = "identity"
    ROTATION_2D = "rotation2d"
    ROTATION_GRID90 = "rotation_grid90"
    ROTATION_RANGE_CLASS = "rotation_range_class"
    PROJECTIVE = "projective"
    TIME_FREQ_MASK = "time_freq_mask"


class OutputRule(str, Enum):
    IDENTITY_OUTPUT = "identity_output"
    PARAMS_TARGET = "params_target"


PARAM_LENGTHS = {
    FamilyId.IDENTITY: 0,
    FamilyId.ROTATION_2D: 1,           # angle (rad)
    FamilyId.ROTATION_GRID90: 1,       # quarter-turn index
    FamilyId.ROTATION_RANGE_CLASS: 2,  # class, angle (deg)
    FamilyId.PROJECTIVE: 10,           # scale, quarter-turn, 8 corner offsets
    FamilyId.TIME_FREQ_MASK: 4,        # t0, t_len, f0, f_len as axis fractions
}

NUM_QUARTERS = 4


class TransformFamily(BaseModel):
    """A transformation family with its sampling ranges (degrees at this boundary)."""

    model_config = ConfigDict(frozen=True)

    family_id: FamilyId = FamilyId.IDENTITY
    output_rule: OutputRule = OutputRule.IDENTITY_OUTPUT
    angle_range_deg: Tuple[float, float] = Field(
        (0.0, 360.0), description="Rotation2D angle range in degrees"
    )
    range_half_width_deg: int = Field(
        10, ge=0, lt=45, description="Half width of each RotationRangeClass range"
    )
    scale_range: Tuple[float, float] = Field(
        (0.8, 1.2), description="Projective scale factor range"
    )
    corner_jitter: float = Field(
        0.125, ge=0.0, lt=0.5, description="Max corner offset as a fraction of side length"
    )
    mask_max_fraction: float = Field(
        0.2, ge=0.0, le=1.0, description="Max mask length as a fraction of the axis"
    )

    @field_validator("angle_range_deg", "scale_range")
    @classmethod
    def validate_range(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        lo, hi = v
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError("Range bounds must be finite")
        if lo > hi:
            raise ValueError("Range must be nonempty (low <= high)")
        return v

    @field_validator("scale_range")
    @classmethod
    def validate_positive_scale(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if v[0] <= 0:
            raise ValueError("Scale factors must be positive")
        return v

    @property
    def angle_range_rad(self) -> Tuple[float, float]:
        lo, hi = self.angle_range_deg
        return math.radians(lo), math.radians(hi)

    def contains(self, g: "TransformInstance") -> bool:
        """Check that an instance lies inside this family's parameter domain."""
        if g.family_id is not self.family_id:
            return False
        p = g.params
        fid = self.family_id
        if fid is FamilyId.IDENTITY:
            return True
        if fid is FamilyId.ROTATION_2D:
            lo, hi = self.angle_range_rad
            return lo <= p[0] <= hi
        if fid is FamilyId.ROTATION_GRID90:
            return _is_quarter(p[0])
        if fid is FamilyId.ROTATION_RANGE_CLASS:
            cls_idx, angle = p
            offset = angle - 90.0 * cls_idx
            return (
                _is_quarter(cls_idx)
                and float(angle).is_integer()
                and abs(offset) <= self.range_half_width_deg
            )
        if fid is FamilyId.PROJECTIVE:
            lo, hi = self.scale_range
            return (
                lo <= p[0] <= hi
                and _is_quarter(p[1])
                and all(abs(o) <= self.corner_jitter for o in p[2:])
            )
        t0, t_len, f0, f_len = p
        return (
            0.0 <= t0 < 1.0
            and 0.0 <= f0 < 1.0
            and 0.0 <= t_len <= self.mask_max_fraction
            and 0.0 <= f_len <= self.mask_max_fraction
        )


class TransformInstance(BaseModel):
    """A concrete sampled g with its output rule g'."""

    model_config = ConfigDict(frozen=True)

    family_id: FamilyId
    params: Tuple[float, ...] = ()
    output_rule: OutputRule = OutputRule.IDENTITY_OUTPUT

    @model_validator(mode="after")
    def validate_params_length(self) -> "TransformInstance":
        expected = PARAM_LENGTHS[self.family_id]
        if len(self.params) != expected:
            raise ValueError(
                f"{self.family_id.value} expects {expected} params, got {len(self.params)}"
            )
        if not all(math.isfinite(v) for v in self.params):
            raise ValueError("Transform params must be finite")
        return self


def _is_quarter(v: float) -> bool:
    return float(v).is_integer() and 0 <= v < NUM_QUARTERS


def sample_transform(family: TransformFamily, rng: RngStream) -> TransformInstance:
    """Draw one transform uniformly from the family domain."""
    gen = rng.generator()
    fid = family.family_id

    if fid is FamilyId.IDENTITY:
        params = ()
    elif fid is FamilyId.ROTATION_2D:
        lo, hi = family.angle_range_rad
        params = (float(gen.uniform(lo, hi)),)
    elif fid is FamilyId.ROTATION_GRID90:
        params = (float(gen.integers(0, NUM_QUARTERS)),)
    elif fid is FamilyId.ROTATION_RANGE_CLASS:
        cls_idx = int(gen.integers(0, NUM_QUARTERS))
        w = family.range_half_width_deg
        offset = int(gen.integers(-w, w + 1))
        params = (float(cls_idx), float(90 * cls_idx + offset))
    elif fid is FamilyId.PROJECTIVE:
        scale = float(gen.uniform(*family.scale_range))
        quarter = float(gen.integers(0, NUM_QUARTERS))
        j = family.corner_jitter
        offsets = gen.uniform(-j, j, size=8)
        params = (scale, quarter, *(float(o) for o in offsets))
    else:
        m = family.mask_max_fraction
        t0 = float(gen.random())
        t_len = float(gen.uniform(0.0, m))
        f0 = float(gen.random())
        f_len = float(gen.uniform(0.0, m))
        params = (t0, t_len, f0, f_len)

    return TransformInstance(family_id=fid, params=params, output_rule=family.output_rule)


# ── geometry ──────────────────────────────────────────────────────────

def _rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def quarter_matrix(quarter: int) -> np.ndarray:
    # exact integer entries so four turns compose to the identity
    return np.linalg.matrix_power(np.array([[0.0, -1.0], [1.0, 0.0]]), quarter % 4)


def _about_centre(linear: np.ndarray) -> np.ndarray:
    """Lift a 2x2 map acting around (0.5, 0.5) of the unit square to a 3x3 homography."""
    lift = np.eye(3)
    lift[:2, :2] = linear
    to_centre = np.array([[1.0, 0.0, -0.5], [0.0, 1.0, -0.5], [0.0, 0.0, 1.0]])
    back = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5], [0.0, 0.0, 1.0]])
    return back @ lift @ to_centre


UNIT_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def fit_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Solve the 4-point direct linear system for H with H[2, 2] = 1."""
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]
        b[2 * i] = u
        b[2 * i + 1] = v
    h = np.linalg.solve(a, b)
    return np.append(h, 1.0).reshape(3, 3)


def projective_matrix(g: TransformInstance) -> np.ndarray:
    """
    Homography of a projective instance in unit-square coordinates.

    Composition order: scale, then quarter-turn rotation (both about the
    centre), then the corner-displacement homography.
    """
    scale, quarter = g.params[0], int(g.params[1])
    offsets = np.asarray(g.params[2:]).reshape(4, 2)
    similarity = _about_centre(quarter_matrix(quarter) @ (scale * np.eye(2)))
    if np.any(offsets):
        corners = fit_homography(UNIT_CORNERS, UNIT_CORNERS + offsets)
    else:
        corners = np.eye(3)
    h = corners @ similarity
    return h / h[2, 2]


def _warp(x: Tensor, h: np.ndarray) -> np.ndarray:
    """Resample a grid under forward homography h; bilinear, zero padding."""
    n_rows, n_cols = x.shape
    rows, cols = np.mgrid[0:n_rows, 0:n_cols].astype(np.float64)
    out_pts = np.stack([
        (cols.ravel() + 0.5) / n_cols,
        (rows.ravel() + 0.5) / n_rows,
        np.ones(rows.size),
    ])
    src = np.linalg.solve(h, out_pts)
    src_col = src[0] / src[2] * n_cols - 0.5
    src_row = src[1] / src[2] * n_rows - 0.5
    warped = ndimage.map_coordinates(
        np.asarray(x, dtype=np.float64),
        [src_row, src_col],
        order=1,
        mode="constant",
        cval=0.0,
    )
    return warped.reshape(n_rows, n_cols)


def _require_vector(x: Tensor, family: FamilyId) -> None:
    if x.shape != (2,):
        raise IncompatibleShape(f"{family.value} on vectors needs shape (2,), got {x.shape}")


def _require_grid(x: Tensor, family: FamilyId) -> None:
    if x.ndim != 2:
        raise IncompatibleShape(f"{family.value} needs a 2D grid, got shape {x.shape}")


def apply(g: TransformInstance, x: Tensor) -> Tensor:
    """
    Apply g to x. Grids keep their shape; vectors rotate about the origin.

    Raises:
        IncompatibleShape: If x does not fit the family
    """
    fid = g.family_id
    x = np.asarray(x, dtype=np.float64)

    if fid is FamilyId.IDENTITY:
        return x

    if fid is FamilyId.ROTATION_2D:
        _require_vector(x, fid)
        return _rotation_matrix(g.params[0]) @ x

    if fid is FamilyId.ROTATION_GRID90:
        quarter = int(g.params[0])
        if x.ndim == 1:
            _require_vector(x, fid)
            return quarter_matrix(quarter) @ x
        _require_grid(x, fid)
        if x.shape[0] != x.shape[1]:
            raise IncompatibleShape(f"Quarter turns need a square grid, got {x.shape}")
        # clockwise on screen: out[r][c] = in[n-1-c][r]. In (column, row) coordinates with
        # rows growing downward this is quarter_matrix(quarter), the counter-clockwise
        # turn the vector branch uses, so both inputs share one quarter index.
        return np.rot90(x, k=-quarter).copy()

    if fid is FamilyId.ROTATION_RANGE_CLASS:
        theta = math.radians(g.params[1])
        if x.ndim == 1:
            _require_vector(x, fid)
            return _rotation_matrix(theta) @ x
        _require_grid(x, fid)
        return _warp(x, _about_centre(_rotation_matrix(theta)))

    if fid is FamilyId.PROJECTIVE:
        _require_grid(x, fid)
        return _warp(x, projective_matrix(g))

    _require_grid(x, fid)
    return _time_freq_mask(g, x)


def _mask_span(start: float, length: float, axis_len: int) -> slice:
    begin = int(math.floor(start * axis_len))
    return slice(begin, min(axis_len, begin + int(math.floor(length * axis_len))))


def _time_freq_mask(g: TransformInstance, x: np.ndarray) -> np.ndarray:
    # rows are frequency bins, columns are time frames
    t0, t_len, f0, f_len = g.params
    fill = float(x.mean())
    out = x.copy()
    out[:, _mask_span(t0, t_len, x.shape[1])] = fill
    out[_mask_span(f0, f_len, x.shape[0]), :] = fill
    return out


def _one_hot(index: int, size: int = NUM_QUARTERS) -> np.ndarray:
    vec = np.zeros(size)
    vec[index] = 1.0
    return vec


def encode_params(g: TransformInstance) -> Tensor:
    """Canonical flat parameter encoding of g."""
    fid = g.family_id
    if fid is FamilyId.IDENTITY:
        return np.zeros(0)
    if fid is FamilyId.ROTATION_2D:
        # same [0, 2*pi) range as the angle predictor
        return np.array([g.params[0] % (2 * math.pi)])
    if fid in (FamilyId.ROTATION_GRID90, FamilyId.ROTATION_RANGE_CLASS):
        return _one_hot(int(g.params[0]))
    if fid is FamilyId.PROJECTIVE:
        return projective_matrix(g).ravel()
    return np.array(g.params)


def output_transform(
    g: TransformInstance,
    y: Tensor,
    rule: Optional[OutputRule] = None,
) -> Tensor:
    """
    Apply g' to a model output.

    Args:
        g: Transform instance
        y: Model output M(x)
        rule: Overrides the instance's own output rule when given

    Returns:
        y itself for the identity rule, encode_params(g) for the params rule
    """
    rule = rule or g.output_rule
    if rule is OutputRule.IDENTITY_OUTPUT:
        return y
    return encode_params(g)
