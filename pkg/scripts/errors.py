"""Exception types raised by the pinning laboratory."""

from __future__ import annotations


class PinningError(ValueError):
    """Base class; the CLI maps it to exit code 1."""


class InvalidSpec(PinningError):
    pass


class NonSummable(PinningError):
    pass


class NonConvergent(PinningError):
    pass


class HorizonExceeded(PinningError):
    pass


class TooLarge(PinningError):
    pass


class NoSolution(PinningError):
    pass


class InfeasibleScales(PinningError):
    pass


class InconclusiveBracket(PinningError):
    pass


class ConfigError(PinningError):
    """Bad or missing configuration; the CLI maps it to exit code 2."""
