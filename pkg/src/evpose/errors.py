"""Exception types shared across the package."""


class EvposeError(Exception):
    """Base class for package-specific failures."""


class ConfigError(EvposeError):
    """A configuration key, value, or combination is invalid."""


class SequencingError(EvposeError):
    """Event timestamps are not in non-decreasing order."""


class CorruptStreamError(EvposeError):
    """An event contradicts its stream header (bounds or polarity)."""


class FormatError(EvposeError):
    """A serialized file does not match its declared binary format."""


class ShapeMismatchError(EvposeError):
    """Operands or parameters with incompatible shapes were combined."""


class NumericFault(EvposeError):
    """A computation produced NaN/Inf or lost positive-definiteness."""


class OutOfFieldOfView(EvposeError):
    """A point lies beyond the camera's maximum field of view."""


class DegeneratePoint(EvposeError):
    """A point at (or numerically at) the optical center cannot project."""
