"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when analysis parameters are inconsistent or out of range."""


class FormatError(ValueError):
    """Raised when an input file does not match its expected layout."""
