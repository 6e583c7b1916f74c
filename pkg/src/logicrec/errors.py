"""Shared exception types."""


class ContractError(ValueError):
    """An operation was called with arguments that violate its contract."""


class DomainError(ValueError):
    """Inputs are outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """A run configuration is invalid or insufficient."""


class CheckpointError(ValueError):
    """A checkpoint file is corrupt, truncated, or incompatible."""


class TrainingAborted(RuntimeError):
    """Training stopped on a non-finite loss; the last good checkpoint is kept."""
