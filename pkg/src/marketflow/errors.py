"""Exception and warning types raised across the package."""

from __future__ import annotations


class MarketflowError(Exception):
    """Base class for every error raised by marketflow."""


class ValidationError(MarketflowError, ValueError):
    """Input violates a documented contract (bad value, duplicate id, ...)."""


class DimensionError(ValidationError):
    """Array or list sizes are empty or do not line up."""


class DomainError(ValidationError):
    """A value lies outside the mathematical domain of an operation."""


class ParseError(ValidationError):
    """A file could not be parsed; carries the offending row or feature."""

    def __init__(self, message: str, *, row: int | None = None):
        super().__init__(message)
        self.row = row


class StateError(MarketflowError, RuntimeError):
    """A pipeline stage was called before its prerequisite stage."""


class DegenerateOriginError(StateError):
    """An origin has zero total utility, so shares are undefined."""


class CollinearityError(ValidationError):
    def __init__(self, message: str, columns: list[str]):
        super().__init__(message)
        self.columns = columns


class TravelTimeError(MarketflowError):
    """The travel-time endpoint failed or answered with a non-2xx status."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class AuthenticationError(TravelTimeError):
    pass


class ResponseFormatError(TravelTimeError):
    pass


class MarketflowWarning(UserWarning):
    """Recoverable anomaly; collected into the run log by the CLI."""
