"""Exception types shared across the package."""

from __future__ import annotations


class Bdf2DcError(Exception):
    """Base class for all package errors."""


class ParameterError(Bdf2DcError, ValueError):
    """Invalid construction parameters (mesh sizes, ratios, tolerances...)."""


class StateError(Bdf2DcError, RuntimeError):
    """An operation was called with insufficient or inconsistent history."""


class CapabilityError(Bdf2DcError, RuntimeError):
    """A required optional capability (e.g. an exact solution) is missing."""


class SolverDivergenceError(Bdf2DcError, RuntimeError):
    """An implicit solve failed to reach its termination tolerance.

    Carries the last residual and iteration count, plus (stage, level)
    context when raised from inside an integration loop.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class LinearSolveError(Bdf2DcError, RuntimeError):
    """A linearised system was singular or otherwise unsolvable."""


class AdaptiveStepError(Bdf2DcError, RuntimeError):
    """The adaptive step controller could not make progress at a level."""
