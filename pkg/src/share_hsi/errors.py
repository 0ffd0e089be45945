"""Exception hierarchy used across the toolkit."""


class ShareError(Exception):
    """Base class for all toolkit errors."""


class FormatError(ShareError):
    """Malformed file header, sidecar, or container."""


class ShapeError(ShareError):
    """Array shape inconsistent with the declared or required shape."""


class DataError(ShareError):
    """Payload values violate a data contract (non-finite, wrong domain)."""


class DomainError(ShareError):
    """Input outside the mathematical domain of an operation."""


class ParameterError(ShareError):
    """Invalid parameter value or combination."""


class BoundsError(ShareError):
    """Index or rectangle out of bounds."""


class DegenerateRangeError(ShareError):
    """Normalization requested over a zero-width value range."""


class UnsupportedError(ShareError):
    """Operation not defined for the given inputs (e.g. non-closed composition)."""


class ConfigError(ShareError):
    """Invalid experiment or network configuration."""


class SpecError(ShareError):
    """Invalid loss-term specification."""


class DivergenceError(ShareError):
    """Training loss became non-finite; carries the last good result."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result
