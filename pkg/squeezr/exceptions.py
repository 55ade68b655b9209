"""Exceptions raised by squeezr.

Configuration and schema problems are ``ValueError`` subclasses so callers
that only care about bad input can catch ``ValueError``; the CLI maps both to
exit code 2.
"""

from __future__ import annotations

from typing import Any


class ConfigError(ValueError):
    """An invalid configuration value or an unknown configuration key."""


class SchemaError(ValueError):
    """A CSV file does not match the expected column layout."""


class LockSequenceError(RuntimeError):
    """The plant rejected a lock command issued out of dependency order."""


class VCurveError(ValueError):
    """A phase scan cannot be fitted (flat or inverted)."""


class FitError(RuntimeError):
    """A pump-sweep fit did not converge from any start point.

    Attributes:
        best: Best parameters found, as a dict, for diagnostics.
    """

    def __init__(self, message: str, best: dict[str, Any] | None = None):
        super().__init__(message)
        self.best = best or {}
