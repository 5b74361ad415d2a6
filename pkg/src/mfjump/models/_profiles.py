"""Shared smooth shape functions used by model rates and Lyapunov weights."""

from __future__ import annotations

import math

__all__ = ["expit", "smooth_abs", "smooth_indicator"]


def expit(s: float) -> float:
    """Numerically stable logistic function ``1 / (1 + exp(-s))``."""
    if s >= 0.0:
        return 1.0 / (1.0 + math.exp(-s))
    e = math.exp(s)
    return e / (1.0 + e)


def smooth_abs(s: float) -> float:
    """``|s|`` outside ``[-1, 1]``, smoothed to ``(s^2 + 1) / 2`` inside."""
    a = abs(s)
    if a >= 1.0:
        return a
    return 0.5 * (s * s + 1.0)


def smooth_indicator(s: float) -> float:
    """Smooth step from 0 at ``s <= -1`` to 1 at ``s >= 1``."""
    if s >= 1.0:
        return 1.0
    if s <= -1.0:
        return 0.0
    return 0.5 * (1.0 + math.sin(0.5 * math.pi * s))
