#!/usr/bin/env python3
"""
Exception hierarchy shared by the signature execution modules.

The CLI maps InfeasibilityError to exit code 2 and every other
SigExecError to exit code 1.
"""

from typing import Optional, Sequence


class SigExecError(Exception):
    """Base class for all errors raised by the signature execution modules."""

    error_type = 'SIGEXEC_ERROR'


class DimensionMismatchError(SigExecError, ValueError):
    """Operands live over different alphabets, or signatures of different shape."""

    error_type = 'DIMENSION_MISMATCH'


class LevelShortfallError(SigExecError, ValueError):
    """A functional has higher degree than the signature it is paired with."""

    error_type = 'LEVEL_SHORTFALL'

    def __init__(self, message: str, required: int, available: int):
        super().__init__(message)
        self.required = required
        self.available = available


class LevelBudgetError(SigExecError, ValueError):
    error_type = 'LEVEL_BUDGET'


class InvalidParameterError(SigExecError, ValueError):
    error_type = 'INVALID_PARAMETER'


class DataFormatError(SigExecError, ValueError):
    """Malformed market data; window_id names the offending window when known."""

    error_type = 'DATA_ERROR'

    def __init__(self, message: str, window_id: Optional[str] = None):
        if window_id is not None:
            message = f"window {window_id}: {message}"
        super().__init__(message)
        self.window_id = window_id


class ConfigError(SigExecError):
    error_type = 'CONFIG_ERROR'

    def __init__(self, message: str, field_paths: Sequence[str] = ()):
        super().__init__(message)
        self.field_paths = list(field_paths)


class InfeasibilityError(SigExecError):
    """The requested optimisation or benchmark has no well-defined solution."""

    error_type = 'INFEASIBLE'


class NotNegativeDefiniteError(InfeasibilityError):
    error_type = 'NOT_NEGATIVE_DEFINITE'

    def __init__(self, message: str, max_eigenvalue: float):
        super().__init__(f"{message} (most positive eigenvalue {max_eigenvalue:.6g})")
        self.max_eigenvalue = max_eigenvalue


class SingularSystemError(InfeasibilityError):
    error_type = 'SINGULAR_SYSTEM'


class BenchmarkInfeasibleError(InfeasibilityError):
    error_type = 'BENCHMARK_INFEASIBLE'
