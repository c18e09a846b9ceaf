"""Exception hierarchy.

``ValidationError`` subclasses map to CLI exit code 1; ``OSError`` (and
``ImageIOError`` which derives from it) map to exit code 2.
"""

from __future__ import annotations


class ValidationError(ValueError):
    """Input violates a documented contract."""


class ParseError(ValidationError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class MissingDimsError(ValidationError):
    def __init__(self, record_id: str) -> None:
        super().__init__(f"record {record_id!r} has no dimensions and no probeable image")
        self.record_id = record_id


class InfeasibleTargetError(ValidationError):
    pass


class SideNotAlignedError(ValidationError):
    pass


class SequenceExceedsCapacityError(ValidationError):
    def __init__(self, seq_id: str, length: int, capacity: int) -> None:
        super().__init__(f"sequence {seq_id!r} has length {length} > capacity {capacity}")
        self.seq_id = seq_id
        self.length = length
        self.capacity = capacity


class DimensionMismatchError(ValidationError):
    pass


class InvalidCuSeqlensError(ValidationError):
    pass


class OddGridError(ValidationError):
    pass


class EmptyAnswerError(ValidationError):
    pass


class EmptyInputError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class ImageIOError(OSError):
    """Base for image header problems; these are I/O-class failures."""


class UnsupportedFormatError(ImageIOError):
    pass


class TruncatedFileError(ImageIOError):
    pass


class DecodeError(ImageIOError):
    pass
