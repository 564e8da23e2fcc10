"""Exception types shared across the toolkit."""


class StereoSeldError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(StereoSeldError):
    """Input data violates a documented range or shape constraint."""


class ParseError(StereoSeldError):
    """A text input could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(StereoSeldError):
    """Configuration values are inconsistent or unusable."""
