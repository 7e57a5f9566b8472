"""Exception hierarchy shared across the package.

Every domain failure raised by library code derives from MirrorforgeError so
the command line layer can map it to a single exit code.
"""

from __future__ import annotations


class MirrorforgeError(Exception):
    """Base class for all domain errors raised by this package."""


class NonPositiveDefiniteError(MirrorforgeError):
    """A stiffness system that should be SPD failed its Cholesky factorization."""


class ConvergenceError(MirrorforgeError):
    """Newton-Raphson failed to converge within the iteration budget.

    Attributes:
        step: zero-based index of the load step that failed.
    """

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class GalerkinSingularError(MirrorforgeError):
    """The spectral Galerkin system is singular or indefinite."""


class CalibrationError(MirrorforgeError):
    """No parameter-grid point produced a finite score."""


class InsufficientSamplesError(MirrorforgeError):
    """Too few samples to fit a kernel density."""


class DegenerateColumnError(MirrorforgeError):
    """A scaling column has zero range."""


class DatasetError(MirrorforgeError):
    """Dataset generation or persistence violated its contract."""


class TrainingDivergedError(MirrorforgeError):
    """A training loss became non-finite.

    Attributes:
        epoch: epoch at which the divergence was detected.
        hidden_size: width of the network that diverged.
    """

    def __init__(self, message: str, epoch: int, hidden_size: int):
        super().__init__(message)
        self.epoch = epoch
        self.hidden_size = hidden_size


class NoViableModelError(MirrorforgeError):
    """Every candidate network diverged or produced no checkpoint."""
