"""Time and size units. Simulated time is integer picoseconds."""

import math
import re

PS_PER_NS = 1000
CYCLE_PS = 833  # 1.2 GHz, rounded down to whole picoseconds
LINE_BYTES = 64
PAGE_BYTES = 4096
PAGE_SHIFT = 12
LINE_MASK = ~(LINE_BYTES - 1)

KB = 1 << 10
MB = 1 << 20
GB = 1 << 30

_SIZE_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+)\s*([KMGT]?)(B|b)?\s*$", re.IGNORECASE)
_SIZE_MULT = {"": 1, "K": KB, "M": MB, "G": GB, "T": 1 << 40}


def ns(value):
    """Convert nanoseconds to integer picoseconds (exact for 1ps resolution)."""
    return int(round(value * PS_PER_NS))


def cycles(n):
    return n * CYCLE_PS


def to_ns(ps):
    return ps / PS_PER_NS


def parse_size(text):
    """Parse '256MB', '4KB', '32GB', '132Mb' or a plain integer into bytes.

    A lowercase trailing ``b`` means bits (``132Mb`` is 132 megabits).
    """
    if isinstance(text, int):
        return text
    m = _SIZE_RE.match(str(text))
    if not m:
        raise ValueError(f"bad size: {text!r}")
    num, prefix, unit = m.groups()
    value = float(num) * _SIZE_MULT[prefix.upper()]
    if unit == "b":
        value /= 8
    return int(math.floor(value + 1e-9))

