"""Exception types shared across the package.

Every failure mode the library promises to detect maps to one of these,
so tests can assert on the class rather than on message text.
"""


class PaagError(Exception):
    """Base class for all package errors."""


class DimensionError(PaagError, ValueError):
    """Operand shapes are incompatible; the message names both shapes."""


class DomainError(PaagError, ValueError):
    """Input outside an op's mathematical domain (log of x <= 0, ...)."""


class MaskError(PaagError, ValueError):
    """A mask excludes every position, or mask and data shapes disagree."""


class ContractError(PaagError, RuntimeError):
    """An API precondition was violated (missing grad, unreachable node)."""


class ConfigError(PaagError, ValueError):
    """A run configuration field is unknown, malformed or inconsistent."""


class DataError(PaagError, ValueError):
    """A corpus record is malformed; the message carries the record index."""


class CheckpointError(PaagError, ValueError):
    """A checkpoint file is unreadable or does not match the model."""


class TrainingDiverged(PaagError, RuntimeError):
    """Training hit a non-finite loss; a diagnostic dump was written."""
