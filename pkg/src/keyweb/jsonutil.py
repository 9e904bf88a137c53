"""Canonical JSON helpers.

Every serialized artifact (observations, trajectories, reports, protocol
messages) goes through :func:`canonical_dumps` so byte-level comparisons are
stable across processes and platforms.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(obj: Any) -> bytes:
    return canonical_dumps(obj).encode("utf-8")


def decimal4(value: Fraction | int | None) -> str | None:
    """Render a rational as a decimal string with 4 fractional digits."""
    if value is None:
        return None
    frac = Fraction(value)
    scaled = frac * 10_000
    whole = round(scaled)  # banker's rounding; values of interest are exact
    sign = "-" if whole < 0 else ""
    whole = abs(whole)
    return f"{sign}{whole // 10_000}.{whole % 10_000:04d}"


def fraction_from_number(raw: float | int | str) -> Fraction:
    """Exact rational from a JSON number via its decimal rendering."""
    if isinstance(raw, bool):
        raise TypeError("boolean is not a number")
    return Fraction(str(raw))
