"""Shared exception and warning types."""


class ConfigError(ValueError):
    """Invalid construction or run-configuration parameters."""


class IdxFormatError(ValueError):
    """Malformed IDX payload; carries the byte offset of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EnduranceWarning(UserWarning):
    """A cell exceeded its programming-cycle budget; the run continues."""
