"""
Choosing which masked positions to recover at a step.
"""
from enum import Enum

import numpy as np

from lib.errors import ConfigurationError


class Selection(str, Enum):
    WEIGHTED = "weighted"  # probability proportional to purity, without replacement
    TOP_K = "top_k"        # the delta_z highest-purity positions


def select_uniform(candidates: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw min(n, len(candidates)) positions uniformly without replacement.

    Args:
        candidates: Integer array of masked positions
        n: Number of positions wanted (>= 1)
        rng: Random generator

    Returns:
        Integer array of chosen positions, in draw order
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    if len(candidates) <= n:
        return candidates.copy()
    return rng.choice(candidates, size=n, replace=False)


def select_weighted(candidates: np.ndarray, weights: np.ndarray, n: int,
                    rng: np.random.Generator) -> np.ndarray:
    """
    Successive draws proportional to weight, renormalizing after each pick.

    Args:
        candidates: Integer array of positions
        weights: Positive weight per candidate
        n: Number of positions wanted (>= 1)
        rng: Random generator

    Returns:
        Integer array of chosen positions, in draw order
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    weights = np.array(weights, dtype=np.float64)
    if weights.shape != candidates.shape:
        raise ConfigurationError("one weight per candidate is required")
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ConfigurationError("selection weights must be finite and nonnegative")
    if len(candidates) <= n:
        return candidates.copy()

    available = np.ones(len(candidates), dtype=bool)
    chosen = []
    for _ in range(n):
        live = np.where(available, weights, 0.0)
        total = live.sum()
        # no weight left among the remaining candidates: uniform over them
        p = live / total if total > 0 else available / available.sum()
        pick = int(rng.choice(len(candidates), p=p))
        chosen.append(candidates[pick])
        available[pick] = False
    return np.array(chosen, dtype=np.int64)


def select_top_k(candidates: np.ndarray, scores: np.ndarray, n: int) -> np.ndarray:
    """
    The n highest-scoring candidates; ties keep the lower position first.

    Args:
        candidates: Integer array of positions
        scores: Score per candidate
        n: Number of positions wanted (>= 1)

    Returns:
        Integer array of chosen positions, best first
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != candidates.shape:
        raise ConfigurationError("one score per candidate is required")
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    order = np.argsort(-scores, kind="stable")
    return candidates[order[:n]]
