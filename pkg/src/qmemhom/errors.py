"""Exception types shared across the package."""


class QMemHOMError(Exception):
    """Base class for all package errors."""


class GridMismatchError(QMemHOMError, ValueError):
    """Two wavepackets that must share a time grid do not."""


class SupportError(QMemHOMError, ValueError):
    """A pulse does not fit inside the requested time grid."""


class EmptyWindowError(QMemHOMError, ValueError):
    """A detection window selects no grid samples."""


class TagFormatError(QMemHOMError, ValueError):
    """Malformed time-tag input.

    ``position`` is a byte offset for binary files and a 1-based line number
    for CSV files.
    """

    def __init__(self, message: str, position: int | None = None, unit: str = "offset"):
        self.position = position
        self.unit = unit
        where = f" ({unit} {position})" if position is not None else ""
        super().__init__(f"{message}{where}")


class UnsortedStreamError(QMemHOMError, ValueError):
    """A time-tag stream is not ordered by timestamp."""


class UnknownChannelError(TagFormatError):
    pass


class NonMonotonicTimestampError(TagFormatError):
    pass


class ConfigError(QMemHOMError, ValueError):
    """Invalid run configuration; ``section`` names the offending key."""

    def __init__(self, message: str, section: str | None = None):
        self.section = section
        super().__init__(message)
