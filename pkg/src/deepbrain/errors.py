"""Exception hierarchy shared across the package."""


class DeepBrainError(Exception):
    """Base class for all package errors."""


class ShapeError(DeepBrainError, ValueError):
    """Array shapes do not match what an operation expects."""


class DataError(DeepBrainError, ValueError):
    """Input data violates a documented invariant."""


class DegenerateInputError(DataError):
    """Input is valid in form but degenerate for the requested statistic."""


class TrainingError(DeepBrainError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class ContractError(DeepBrainError, RuntimeError):
    """A call-order contract was violated (e.g. stale forward trace)."""
