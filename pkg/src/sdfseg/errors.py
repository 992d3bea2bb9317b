"""Exception types shared across the package.

Everything derives from SdfSegError so callers can catch broadly; most
types also subclass ValueError because they signal bad inputs.
"""


class SdfSegError(Exception):
    """Base class for all package-specific errors."""


class FormatError(SdfSegError, ValueError):
    """A container or model file is missing fields or is garbled."""


class SizeError(SdfSegError, ValueError):
    """Payload length disagrees with the declared dimensions."""


class ValidationError(SdfSegError, ValueError):
    """Data violates a domain invariant (e.g. non-binary mask values)."""


class ShapeError(SdfSegError, ValueError):
    """Array shapes are inconsistent for the requested operation."""


class ConfigError(SdfSegError, ValueError):
    """A configuration value violates its invariants."""


class EmptyLabelError(SdfSegError, ValueError):
    """An operation requires at least one pixel/voxel of a label."""


class UndefinedMetricError(SdfSegError, ValueError):
    """A surface metric is undefined (an empty surface was involved)."""


class NumericError(SdfSegError, ArithmeticError):
    """Non-finite values where finite ones are required."""
