"""Exception types shared across the package."""


class OLRGError(Exception):
    """Base class for library errors."""


class ConfigError(OLRGError, ValueError):
    """Invalid configuration or invalid user input."""


class NumericError(OLRGError, ArithmeticError):
    """Non-finite values or a diverging solver."""


class ResourceError(OLRGError, RuntimeError):
    """Requested dense dimension is beyond what this machine should attempt."""
