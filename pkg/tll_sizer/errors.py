# tll_sizer/errors.py
"""Exception hierarchy shared by every module of the package."""
from typing import Optional


class TLLSizerError(Exception):
    """Base class for all errors raised by tll_sizer."""


class ConfigError(TLLSizerError):
    """Invalid or incomplete run configuration (CLI exit code 2)."""


class NonFiniteError(TLLSizerError):
    """A computation produced inf/nan where a finite value is required."""

    def __init__(self, message: str, cap: Optional[float] = None):
        super().__init__(message)
        self.cap = cap


class SizingOverflowError(TLLSizerError):
    """An integer bound exceeded the signed 64-bit range."""


class InvalidPitchError(TLLSizerError, ValueError):
    """Grid pitch or shrink factor outside its admissible range."""


class OutOfDomainError(TLLSizerError, ValueError):
    """A point lies outside the domain box and clamping is disabled."""


class UnsupportedDimensionError(TLLSizerError):
    """Exact piece enumeration requested for a state dimension above 2."""


class InconsistentLatticeError(TLLSizerError):
    """A lattice form does not reproduce the piecewise function it was built from."""


class DivergedError(TLLSizerError):
    """A simulated trajectory left the divergence ball."""

    def __init__(self, message: str, time: Optional[float] = None):
        super().__init__(message)
        self.time = time


class ArtifactError(TLLSizerError):
    """A serialized artifact is missing, unreadable or of the wrong kind."""


class OracleRangeWarning(UserWarning):
    """An oracle sample fell outside the control box and was clamped."""
