"""Exception types shared across the package."""


class TactileError(Exception):
    """Base class for every error raised by tactile_svae."""


class DomainError(TactileError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class ConfigError(TactileError, ValueError):
    pass


class ShapeError(TactileError, ValueError):
    pass


class UsageError(TactileError, RuntimeError):
    """An API was called out of order (e.g. backward on a consumed cache)."""


class NumericError(TactileError, ArithmeticError):
    pass


class FormatError(TactileError, ValueError):
    """A serialized file is malformed. ``offset`` is the byte position, when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataError(TactileError, ValueError):
    pass


class IntegrityError(DataError):
    pass


class RangeError(TactileError, ValueError):
    pass


class InfeasibleReferenceError(TactileError, ValueError):
    """The requested force cannot be produced anywhere in the plant's travel."""


class UndefinedMetricError(TactileError, ValueError):
    pass
