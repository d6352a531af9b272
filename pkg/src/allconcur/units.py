"""Duration and probability-target parsing shared by the CLI and config.

Durations accept the suffixes us, ms, s, h, y (a year is 365*24h) and
return seconds as a float.  Targets accept either a float below one or
"<k>nines" shorthand (6nines = 0.999999).
"""

from __future__ import annotations

_SUFFIXES = {
    "us": 1e-6,
    "ms": 1e-3,
    "s": 1.0,
    "h": 3600.0,
    "y": 365.0 * 24 * 3600.0,
}


def parse_duration(text: str) -> float:
    text = text.strip()
    for suffix in ("us", "ms", "y", "h", "s"):
        if text.endswith(suffix):
            return float(text[: -len(suffix)]) * _SUFFIXES[suffix]
    return float(text)


def parse_target(text: str) -> float:
    text = text.strip().lower()
    if text.endswith("nines"):
        k = int(text[: -len("nines")])
        return 1.0 - 10.0**-k
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise ValueError(f"target {value} must lie in [0, 1)")
    return value
