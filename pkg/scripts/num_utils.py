"""Shared numeric and formatting helpers."""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np
from scipy.special import logsumexp

LOG_ZERO = float("-inf")

# 2**64 - 1; seed mixing is done modulo this width
MASK64 = (1 << 64) - 1


def log_sum(terms: Iterable[float] | np.ndarray) -> float:
    """Log of the sum of exp(terms); an empty or all -inf input gives -inf."""
    arr = np.asarray(list(terms) if not isinstance(terms, np.ndarray) else terms, dtype=float)
    if arr.size == 0 or not np.any(np.isfinite(arr)):
        return LOG_ZERO
    return float(logsumexp(arr))


def safe_log(x: np.ndarray | float) -> np.ndarray | float:
    """Natural log taking zero to -inf without a warning."""
    with np.errstate(divide="ignore"):
        return np.log(x)


def splitmix64(x: int) -> int:
    """One round of the SplitMix64 finalizer on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def fmt_float(x: float) -> str:
    """17-significant-digit rendering used by every CSV and dump writer."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def fmt_log_scale(value: float, log_value: float) -> str:
    """Render a quantity that may overflow: the value if finite, else exp(log)."""
    if math.isfinite(value) and log_value < 700.0:
        return fmt_float(value)
    return f"exp({fmt_float(log_value)})"
