"""Exception hierarchy shared across the codec."""


class SalpccError(Exception):
    """Base class for all errors raised by this package."""


class DataError(SalpccError):
    """Malformed or inconsistent input data (files, streams, shapes)."""


class PlyError(DataError):
    """PLY parsing or writing failure.

    ``offset`` is the byte position in the file where the problem was
    detected, so truncation and header errors can be located exactly.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class StreamError(DataError):
    """Compressed stream is not parseable (bad magic, truncation, ...)."""


class NumericalError(SalpccError):
    """A numerical routine failed to produce a usable result."""
