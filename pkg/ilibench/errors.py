"""
Error hierarchy for ilibench.

Library code raises these; the CLI maps ``exit_code`` to the process exit
status (0 success, 1 config, 2 data, 3 numerical).
"""


class IliError(Exception):
    """Base class for every error ilibench raises on purpose."""

    exit_code = 1


class ConfigError(IliError):
    """Invalid configuration value or run precondition."""

    exit_code = 1


class DataError(IliError):
    """Dataset cannot be loaded or violates a shape/label invariant."""

    exit_code = 2


class IdxMagicError(DataError):
    """IDX header carries the wrong magic number."""


class IdxTruncatedError(DataError):
    """IDX payload is shorter than its header announces."""


class IdxCountMismatchError(DataError):
    """Image and label files disagree on the sample count."""


class NumericalError(IliError):
    """Training produced a non-finite loss."""

    exit_code = 3

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
