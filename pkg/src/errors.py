"""Domain errors raised across the toolkit.

Every error derives from StereoBenchError so the CLI can map the whole family
to exit code 1. Value-type problems also derive from ValueError and lookup
problems from LookupError.
"""
from __future__ import annotations

from typing import Iterable


class StereoBenchError(Exception):
    """Base class for all domain errors."""


class ConfigError(StereoBenchError, ValueError):
    pass


class DimensionMismatchError(StereoBenchError, ValueError):
    pass


class OddWidthError(StereoBenchError, ValueError):
    pass


class ZeroDimensionError(StereoBenchError, ValueError):
    pass


class EmptyInputError(StereoBenchError, ValueError):
    pass


class InvalidParamsError(StereoBenchError, ValueError):
    pass


class TooSmallError(StereoBenchError, ValueError):
    pass


class LengthMismatchError(StereoBenchError, ValueError):
    pass


class DegenerateInputError(StereoBenchError, ValueError):
    pass


class NonPositiveParamError(StereoBenchError, ValueError):
    pass


class InvalidDisparityError(StereoBenchError, ValueError):
    pass


class AllOccludedError(StereoBenchError, ValueError):
    pass


class InvalidRangeError(StereoBenchError, ValueError):
    pass


class ShapeMismatchError(StereoBenchError, ValueError):
    pass


class StepOutOfRangeError(StereoBenchError, ValueError):
    pass


class NonMonotoneStepsError(StereoBenchError, ValueError):
    pass


class EmptyDirectoryError(StereoBenchError, ValueError):
    pass


class InsufficientRecordsError(StereoBenchError, ValueError):
    pass


class ManifestError(StereoBenchError, ValueError):
    pass


class AnnotationError(StereoBenchError, ValueError):
    pass


class ReportError(StereoBenchError, ValueError):
    pass


class UnknownPairIdError(StereoBenchError, LookupError):
    pass


class MissingCandidateError(StereoBenchError, LookupError):
    """Raised when generated images are absent for some evaluated pairs."""

    def __init__(self, missing: Iterable[str]):
        self.missing = sorted(missing)
        preview = ", ".join(self.missing[:10])
        more = f" (+{len(self.missing) - 10} more)" if len(self.missing) > 10 else ""
        super().__init__(f"missing candidates for {len(self.missing)} pairs: {preview}{more}")
