"""Exception types shared across the package."""


class NogapError(Exception):
    """Base class for all package errors."""


class ShapeError(NogapError, ValueError):
    """Operand shapes or grid sizes do not conform."""


class DomainError(NogapError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(NogapError, ValueError):
    """Invalid or unsupported configuration."""


class FormatError(NogapError, ValueError):
    """A binary container is truncated, corrupt or of the wrong version."""


class ContractError(NogapError, TypeError):
    """A caller violated an API contract (wrong return type, bad index, ...)."""


class NumericError(NogapError, ArithmeticError):
    """Non-finite values appeared during a computation."""

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


class SolverDivergence(NumericError):
    """A time integrator produced a non-finite state."""


class TrainingDiverged(NumericError):
    """The training objective became non-finite.

    ``checkpoint`` holds the best finite parameters seen before divergence.
    """

    def __init__(self, message, checkpoint=None, log=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.log = log or []
