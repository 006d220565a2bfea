from __future__ import annotations

import logging
import math
import os
import re
from typing import List, Optional, Tuple

import numpy as np

METHODS = ("oh", "ar", "dk")
THREADS_ENV = "CONVEXP_THREADS"

RANGE_REGEX = re.compile(r'^\s*([^:]+):([^:]+):(\d+)\s*$')


def parse_grid(text: str) -> List[float]:
    """Parse "a,b,c" or the inclusive linspace "start:stop:count" into a sorted list without duplicates."""
    text = text.strip()
    if not text:
        raise ValueError("Empty grid.")
    match = RANGE_REGEX.match(text)
    if match:
        start, stop, count = float(match.group(1)), float(match.group(2)), int(match.group(3))
        if count < 1:
            raise ValueError(f"Grid {text} has no points.")
        values = np.linspace(start, stop, count).tolist()
    else:
        try:
            values = [float(part) for part in text.split(",") if part.strip()]
        except ValueError:
            raise ValueError(f"Invalid grid {text} (expected a,b,c or start:stop:count).") from None
    if not values:
        raise ValueError(f"Grid {text} has no points.")
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"Grid {text} contains non-finite values.")
    return sorted(set(values))


def resolve_threads(threads: Optional[int]) -> int:
    if threads is not None:
        if threads < 1:
            raise ValueError(f"Invalid thread count: {threads} (must be at least 1).")
        return threads

    env = os.environ.get(THREADS_ENV)
    if env is None or env == "":
        return 1
    try:
        value = int(env)
    except ValueError:
        raise ValueError(f"Invalid {THREADS_ENV}={env!r} (must be a positive integer).") from None
    if value < 1:
        raise ValueError(f"Invalid {THREADS_ENV}={env!r} (must be a positive integer).")
    logging.warning(f"No --threads given; using {THREADS_ENV}={value}.")
    return value


def resolve_methods(method: Optional[str]) -> Tuple[str, ...]:
    """Expand a method selector (oh, ar, dk, all, or a comma list) into exponent methods in canonical order."""
    if not method:
        logging.warning("No method specified; using all.")
        return METHODS
    names = {part.strip().lower() for part in method.split(",")}
    if "all" in names:
        return METHODS
    # the Arimoto form is also known by Gallager's E0 name
    if "gallager" in names:
        logging.warning("Method gallager is an alias; use ar.")
        names = (names - {"gallager"}) | {"ar"}
    unknown = names - set(METHODS)
    if unknown:
        raise ValueError(f"Invalid method: {','.join(sorted(unknown))} (must be oh, ar, dk, or all).")
    return tuple(m for m in METHODS if m in names)


def format_value(value: float) -> str:
    """repr-based float text; the same float always prints the same way."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))
