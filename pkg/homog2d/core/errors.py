"""
Shared exception types for every homog2d stage.
"""

from __future__ import annotations


class Homog2dError(Exception):
    """Base homog2d exception."""

    exit_code: int = 1
    error_code: str = "HOMOG2D_ERROR"

    def __init__(self, message: str, *, details: dict | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_record(self) -> dict:
        """Structured form used for logs and report.txt."""
        return {
            "message": self.message,
            "code": self.error_code,
            "details": self.details,
        }


class ConfigError(Homog2dError):
    exit_code = 2
    error_code = "CONFIG_ERROR"


class CommensurabilityError(ConfigError):
    error_code = "NOT_COMMENSURATE"


class CoefficientError(Homog2dError):
    exit_code = 2
    error_code = "COEFFICIENT_ERROR"


class EllipticityError(CoefficientError):
    error_code = "NOT_ELLIPTIC"


class AliasingError(CoefficientError):
    error_code = "ALIASING"


class GridMismatchError(Homog2dError):
    error_code = "GRID_MISMATCH"


class SolverError(Homog2dError):
    """Krylov failure; details carry the residual history."""

    error_code = "SOLVER_FAILURE"


class CoercivityError(SolverError):
    error_code = "NOT_COERCIVE"


class SolvabilityError(SolverError):
    error_code = "NOT_SOLVABLE"


class GreenError(Homog2dError):
    error_code = "GREEN_FAILURE"


class RateError(Homog2dError):
    error_code = "RATE_FAILURE"


class CacheError(Homog2dError):
    error_code = "CACHE_ERROR"


class CacheFormatError(CacheError):
    error_code = "CACHE_FORMAT"


class CacheChecksumError(CacheError):
    error_code = "CACHE_CHECKSUM"
