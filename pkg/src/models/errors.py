"""
Exception hierarchy for hplab.

Every error raised by the package derives from HPLabError. The CLI maps
the three families below to exit codes (config 2, numerical domain 3,
invariant failure 4).
"""
from typing import Optional


class HPLabError(Exception):
    """Root of all package errors."""
    pass


class DomainError(HPLabError, ValueError):
    """Raised when an input lies outside the numerical domain of an operation."""
    pass


class ConfigError(HPLabError):
    """Raised when a run configuration is malformed or inconsistent."""
    pass


class InvariantError(HPLabError):
    """Raised when a verified identity does not hold."""
    pass


class LatticeError(DomainError):
    """Raised on invalid hierarchical lattice arithmetic."""
    pass


class CovarianceError(DomainError):
    """Raised on inadmissible or singular masses."""
    pass


class ProfileError(DomainError):
    """Raised when a profile integral is requested outside its domain."""
    pass


class ScaleError(DomainError):
    """Raised when scale constants are requested outside d >= 4."""
    pass


class FlowError(DomainError):
    """Raised when the coupling flow leaves its admissible interval."""

    def __init__(self, message: str, scale: Optional[int] = None):
        super().__init__(message)
        self.scale = scale


class RGError(DomainError):
    """Raised when an exact RG step or the zero-mode integral fails."""

    def __init__(self, message: str, scale: Optional[int] = None,
                 grid_index: Optional[int] = None):
        super().__init__(message)
        self.scale = scale
        self.grid_index = grid_index


class SamplerError(DomainError):
    """Raised when a Monte Carlo sampler cannot run with the given inputs."""
    pass
