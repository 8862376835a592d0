"""Exception types shared across the package.

Every error raised by kinn derives from :class:`KinnError`, so callers (and
the CLI) can catch one base class and still tell the failure modes apart.
"""

from __future__ import annotations


class KinnError(Exception):
    """Base class for all kinn errors."""


class ContractViolationError(KinnError):
    """An argument violated a documented precondition or invariant."""


class DegenerateGeometryError(KinnError):
    """Generator parameters produce an undefined constraint slope (p_bar == p_plus)."""


class InfeasibleInstanceError(KinnError):
    """The constraint polygon is empty; projection has no solution."""


class SolverFailureError(KinnError):
    """The small-QP solver rejected every candidate support (defensive)."""


class DivergenceError(KinnError):
    """Training produced non-finite values."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class CorruptCheckpointError(KinnError):
    """Checkpoint bytes failed magic, length, or checksum validation."""


class UnsupportedVersionError(CorruptCheckpointError):
    """Checkpoint has a valid header but an unknown format version."""


class UndefinedMetricError(KinnError):
    """A metric is undefined for the given data (e.g. R^2 with zero variance)."""
