"""Parsing of human-friendly byte sizes ("1MiB", "64KB", "4096")."""

from __future__ import annotations

import re

from fabricbench.errors import ValidationError

_UNITS = {
    "": 1,
    "b": 1,
    "kb": 10**3,
    "mb": 10**6,
    "gb": 10**9,
    "kib": 2**10,
    "mib": 2**20,
    "gib": 2**30,
    "k": 2**10,
    "m": 2**20,
    "g": 2**30,
}

_SIZE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([a-zA-Z]*)\s*$")


def parse_size(text: str | int) -> int:
    """Byte count from an int or a string such as ``"1MiB"`` (binary) or ``"1MB"`` (decimal)."""
    if isinstance(text, int) and not isinstance(text, bool):
        value = text
    else:
        m = _SIZE.match(str(text))
        if not m or m.group(2).lower() not in _UNITS:
            raise ValidationError(f"cannot parse size {text!r}")
        value = float(m.group(1)) * _UNITS[m.group(2).lower()]
        if value != int(value):
            raise ValidationError(f"size {text!r} is not a whole number of bytes")
        value = int(value)
    if value <= 0:
        raise ValidationError(f"size must be positive, got {text!r}")
    return value
