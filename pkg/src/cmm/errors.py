"""Exception types raised across the package."""


class CmmError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(CmmError, ValueError):
    """Operand shapes do not agree."""


class ParameterError(CmmError, ValueError):
    """A scalar or count argument is out of its valid range."""


class FormatError(CmmError):
    """A weight bundle is malformed (bad magic, bad header, overlapping tensors)."""


class CorruptionError(FormatError):
    """A weight bundle payload is truncated or otherwise incomplete."""


class UsageError(CmmError, ValueError):
    """A benchmark sweep description is invalid."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
