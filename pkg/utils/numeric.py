"""
Small numeric helpers shared by the probability modules.
"""
import numpy as np

# Tolerance for "sums to one" checks on returned distributions.
NORMALIZATION_TOL = 1e-9


def normalize_rows(weights: np.ndarray) -> np.ndarray:
    """
    Divide each row by its sum.

    Args:
        weights: Nonnegative array of shape (n, k) with positive row sums

    Returns:
        Row-stochastic array of the same shape
    """
    weights = np.asarray(weights, dtype=np.float64)
    return weights / weights.sum(axis=-1, keepdims=True)


def is_distribution(probs: np.ndarray, tol: float = NORMALIZATION_TOL) -> bool:
    """True when every row is nonnegative and sums to one within tol."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size == 0 or np.any(probs < 0) or not np.all(np.isfinite(probs)):
        return False
    return bool(np.all(np.abs(probs.sum(axis=-1) - 1.0) <= tol))


def sample_categorical_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Draw one index per row by inverse-CDF sampling.

    The uniform draw is scaled by the row total, so zero-probability
    entries (whose cumulative sum equals the previous one) are never hit.

    Args:
        probs: Array of shape (n, k) with nonnegative rows
        rng: Random generator; consumes exactly n uniforms

    Returns:
        Integer array of shape (n,) with 0-based column indices
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)
