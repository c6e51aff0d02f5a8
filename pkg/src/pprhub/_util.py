"""Small numeric helpers."""

from __future__ import annotations

import math

import numpy as np


def ceil_guarded(x: float, rel: float = 1e-9) -> int:
    """``ceil(x)`` that treats values within ``rel`` of an integer as that integer."""
    r = round(x)
    if abs(x - r) <= rel * max(1.0, abs(x)):
        return int(r)
    return int(math.ceil(x))


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def iterations_for(alpha: float, tol: float) -> int:
    """Smallest ``i`` with ``(1 - alpha)**i <= tol``."""
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    return max(1, ceil_guarded(math.log(tol) / math.log1p(-alpha)))


def unit(n: int, v: int) -> np.ndarray:
    e = np.zeros(n)
    e[v] = 1.0
    return e
