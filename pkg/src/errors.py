"""Exception types shared across the detector."""

from typing import List, Tuple


class DetectorError(Exception):
    """Base class for every error raised by the detector."""


class ShapeMismatch(DetectorError, ValueError):
    """Tensor data length disagrees with its declared shape."""


class NonFinite(DetectorError, ValueError):
    """A tensor element is NaN or infinite."""


class IncompatibleShape(DetectorError, ValueError):
    """Input shape does not fit the transform, model or loss."""


class WrongModelKind(DetectorError, ValueError):
    """Operation is not supported by the selected model."""


class InvalidDistribution(DetectorError, ValueError):
    """Vector is not a valid probability (or one-hot) vector."""


class EmptyTrainingSet(DetectorError, ValueError):
    """k-NN scoring was asked to run without training features."""


class KTooLarge(DetectorError, ValueError):
    """k exceeds the number of training features."""


class InvalidN(DetectorError, ValueError):
    """Number of transforms per point must be at least 1."""


class EmptyVector(DetectorError, ValueError):
    """Aggregation over an empty score vector."""


class EmptyCalibration(DetectorError, ValueError):
    """Calibration set is empty (k = 0)."""


class NonFiniteScore(DetectorError, ValueError):
    """A score is NaN or infinite."""


class InvalidEpsilon(DetectorError, ValueError):
    """Detection threshold must lie strictly between 0 and 1."""


class TooFewScores(DetectorError, ValueError):
    """Full-CAD p-value needs at least one calibration and one test score."""


class EmptyInput(DetectorError, ValueError):
    """Metric computed over an empty list."""


class EmptyPool(DetectorError, ValueError):
    """FDR sweep has nothing to resample calibration sets from."""


class OffGridValue(DetectorError, ValueError):
    """p-value does not sit on the {1/(k+1), ..., 1} grid."""


class FingerprintMismatch(DetectorError):
    """Calibration artifact was built under a different configuration."""


class MissingSeed(DetectorError):
    """Randomised subcommand invoked without an explicit seed."""


class DuplicateId(DetectorError):
    """Record id appears more than once."""

    def __init__(self, record_id: str, line_number: int):
        self.record_id = record_id
        self.line_number = line_number
        super().__init__(f"Line {line_number}: duplicate id '{record_id}'")


class SchemaViolation(DetectorError):
    """Raised when score-file records fail validation."""

    def __init__(self, errors: List[Tuple[int, str]]):
        """
        Initialize with list of (line_number, message) tuples.

        Args:
            errors: List of tuples containing (line_number, error message)
        """
        self.errors = errors
        super().__init__("\n".join(f"Line {line}: {msg}" for line, msg in errors))
