"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class CodedSketchError(Exception):
    """Base class for all package errors."""


class ParameterError(CodedSketchError, ValueError):
    """Invalid sizes, indices or mismatched operands."""


class PartitionError(ParameterError):
    """A matrix dimension is not divisible by the requested block count."""


class ConfigurationError(ParameterError):
    """Scheme parameters are inconsistent (e.g. too few workers)."""


class InsufficientSamplesError(CodedSketchError):
    def __init__(self, needed: int, got: int):
        self.needed = needed
        self.got = got
        self.shortfall = needed - got
        super().__init__(
            f"need {needed} samples to interpolate, got {got} (short by {self.shortfall})"
        )


class NumericalFailureError(CodedSketchError):
    def __init__(self, residue: float, limit: float, what: str = "imaginary residue"):
        self.residue = residue
        self.limit = limit
        self.what = what
        super().__init__(f"{what} {residue:.3e} exceeds limit {limit:.3e} after decoding")


class StarvationError(CodedSketchError):
    def __init__(self, requested: int, available: int):
        self.requested = requested
        self.available = available
        self.shortfall = requested - available
        super().__init__(
            f"requested {requested} results but only {available} workers survive "
            f"(short by {self.shortfall})"
        )
