"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class DiscreteRiemannError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(DiscreteRiemannError, ValueError):
    pass


class InvalidSubdomainError(DiscreteRiemannError, ValueError):
    pass


class SingularFaceError(DiscreteRiemannError, ValueError):
    pass


class CompatibilityError(DiscreteRiemannError, ValueError):
    pass


class IterationLimitError(DiscreteRiemannError, RuntimeError):
    """Raised when an iterative solver stops before reaching its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class InvalidCycleError(DiscreteRiemannError, ValueError):
    pass


class InvalidLocationError(DiscreteRiemannError, ValueError):
    pass


class WrongSurfaceClassError(DiscreteRiemannError, ValueError):
    pass


class SingularEvaluationError(DiscreteRiemannError, ValueError):
    pass


class DuplicateSingularityError(DiscreteRiemannError, ValueError):
    pass


class InvalidDipoleError(DiscreteRiemannError, ValueError):
    pass


class ConfigurationError(DiscreteRiemannError, ValueError):
    pass


class ResolutionError(DiscreteRiemannError, ValueError):
    pass


class PreconditionError(DiscreteRiemannError, ValueError):
    pass


class ArityError(DiscreteRiemannError, ValueError):
    pass


class ProbeSelectionError(DiscreteRiemannError, RuntimeError):
    pass


class DivisionGuardError(DiscreteRiemannError, ValueError):
    pass


class PoleProximityError(DiscreteRiemannError, ValueError):
    pass


class InsufficientCoverageError(DiscreteRiemannError, ValueError):
    pass


class ShapeError(DiscreteRiemannError, ValueError):
    pass


class StageError(DiscreteRiemannError):
    """Wraps an error raised inside a pipeline stage, tagging the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
