"""Walker/Vose alias tables for O(1) categorical sampling."""

from __future__ import annotations

import numpy as np


class AliasTable:
    """Categorical distribution over ``0..k-1`` sampled in O(1) per draw.

    Parameters
    ----------
    weights : array_like
        Non-negative weights, not necessarily normalized.

    Examples
    --------
    >>> table = AliasTable([1.0, 3.0])
    >>> draws = table.sample(np.random.default_rng(0), 4)
    >>> draws.shape
    (4,)
    """

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must not all be zero")
        k = w.size
        self.probabilities = w / total
        scaled = self.probabilities * k
        prob = np.ones(k)
        alias = np.arange(k)
        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        scaled = scaled.tolist()
        while small and large:
            s, g = small.pop(), large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = (scaled[g] + scaled[s]) - 1.0
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            prob[i] = 1.0
        self.prob = prob
        self.alias = alias

    def __len__(self) -> int:
        return self.prob.size

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` independent indices."""
        cols = rng.integers(0, self.prob.size, size=size)
        keep = rng.random(size) < self.prob[cols]
        return np.where(keep, cols, self.alias[cols])
