"""Typed errors with stable short codes, raised instead of silent coercion."""


class RefineError(Exception):
    """Base error. `code` is a stable machine-readable identifier."""

    code = "error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class FormatError(RefineError):
    """Malformed or inconsistent file content."""

    code = "format"


class ValidationError(RefineError):
    """Domain invariant violated (shapes, ranges, cardinalities)."""

    code = "validation"


class CalibrationError(RefineError):
    """Noise-rate target cannot be met."""

    code = "calibration"


class TrainingError(RefineError):
    """Optimization failure (non-finite loss)."""

    code = "training"


# stable codes used across modules
BAD_MAGIC = "bad_magic"
TRUNCATED = "truncated"
DIM_OVERFLOW = "dim_overflow"
NON_FINITE = "non_finite"
LABEL_RANGE = "label_range"
DUPLICATE_ID = "duplicate_id"
CARDINALITY = "cardinality_mismatch"
ID_MISMATCH = "id_mismatch"
EMPTY = "empty"
DEGENERATE_PROTOTYPE = "degenerate_prototype"
ZERO_NORM = "zero_norm"
DIM_MISMATCH = "dim_mismatch"
RATE_UNREACHABLE = "rate_unreachable"
DIVERGED = "diverged"
BAD_CONFIG = "bad_config"
