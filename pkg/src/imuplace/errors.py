"""Exception types shared across the package."""


class ImuPlaceError(Exception):
    """Base class for all package errors."""


class ValidationError(ImuPlaceError, ValueError):
    """Input violates a documented precondition."""


class DegenerateInputError(ValidationError):
    """Input is numerically degenerate (e.g. a rank-deficient matrix)."""


class SequenceTooShortError(ValidationError):
    """A sequence is shorter than an operation requires."""


class TrainingDivergedError(ImuPlaceError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, step, loss):
        super().__init__(f"training diverged at step {step}: loss = {loss}")
        self.step = step
        self.loss = loss
