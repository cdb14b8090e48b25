"""Exception types shared across the package."""


class AncError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AncError, ValueError):
    """Invalid parameters or scenario configuration."""


class SignalChainError(AncError, ValueError):
    """A non-finite value entered the signal chain."""


class DivergenceFault(AncError, FloatingPointError):
    """An adaptive filter produced a non-finite weight or error.

    ``sample`` is the index at which it was detected when known.
    """

    def __init__(self, message: str, sample: int | None = None):
        super().__init__(message)
        self.sample = sample


class SequencingError(AncError, RuntimeError):
    """Plant stepped out of order."""
