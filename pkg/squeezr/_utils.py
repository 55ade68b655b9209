"""Internal utilities for squeezr."""

from __future__ import annotations

import difflib
import math
from collections.abc import Iterable


def suggest_similar(invalid: str, valid_options: Iterable[str]) -> str | None:
    """Find a similar string from valid_options using fuzzy matching.

    Args:
        invalid: The invalid string to find matches for.
        valid_options: Options to search through.

    Returns:
        The closest matching string if found with >= 60% similarity, else None.
    """
    matches = difflib.get_close_matches(invalid, list(valid_options), n=1, cutoff=0.6)
    return matches[0] if matches else None


def unknown_option_message(kind: str, invalid: str, valid_options: Iterable[str]) -> str:
    valid = sorted(valid_options)
    msg = f"Unknown {kind} '{invalid}'. Available: {', '.join(valid) or '(none)'}"
    suggestion = suggest_similar(invalid, valid)
    if suggestion:
        msg += f". Did you mean '{suggestion}'?"
    return msg


def finite_or_none(value: float | None) -> float | None:
    """JSON has no inf/nan; report them as null."""
    if value is None or not math.isfinite(value):
        return None
    return value
