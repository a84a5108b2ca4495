"""
Transition-matrix mathematics for the mask-and-replace process.

Distributions over token states are float64 vectors of length K + 1,
index j - 1 holding token j and index K holding MASK.
"""
import logging
from typing import Tuple

import numpy as np

from diffusion.grid import TokenGrid, mask_token
from diffusion.schedule import NoiseSchedule, Rates, segment_rates
from lib.errors import ConfigurationError, UnreachableStateError
from utils.numeric import normalize_rows, sample_categorical_rows

logger = logging.getLogger(__name__)


def _check_token(x: int, K: int, allow_mask: bool = True) -> int:
    upper = K + 1 if allow_mask else K
    if not 1 <= int(x) <= upper:
        raise ConfigurationError(f"token id {x} outside [1, {upper}]")
    return int(x)


def transition_column(x_prev: int, rates: Rates, K: int) -> np.ndarray:
    """
    Column Q_t v(x_prev): the distribution of x_t given x_{t-1}.

    Args:
        x_prev: Token id in 1..K+1
        rates: (alpha, beta, gamma) of the step
        K: Vocabulary size excluding MASK

    Returns:
        Probability vector of length K + 1
    """
    x_prev = _check_token(x_prev, K)
    alpha, beta, gamma = rates
    col = np.zeros(K + 1)
    if x_prev == mask_token(K):
        col[K] = 1.0
        return col
    col[:K] = beta
    col[x_prev - 1] += alpha
    col[K] = gamma
    return col


def cumulative_column(x_0: int, cum: Rates, K: int) -> np.ndarray:
    """
    Closed-form q(x_t | x_0) = Q_t···Q_1 v(x_0).

    Args:
        x_0: Unnoised token id in 1..K
        cum: (cum_alpha, cum_beta, cum_gamma) at t
        K: Vocabulary size excluding MASK

    Returns:
        Probability vector of length K + 1
    """
    x_0 = _check_token(x_0, K, allow_mask=False)
    return transition_column(x_0, cum, K)


def transition_matrix(rates: Rates, K: int) -> np.ndarray:
    """Column-stochastic (K+1) x (K+1) matrix whose column j is transition_column(j+1)."""
    return np.stack([transition_column(x, rates, K) for x in range(1, K + 2)], axis=1)


def sample_forward_batch(x_0: np.ndarray, t: np.ndarray, schedule: NoiseSchedule,
                         rng: np.random.Generator) -> np.ndarray:
    """
    Corrupt many clean grids at once, each with its own timestep.

    Per position: MASK with probability cum_gamma, a uniformly drawn token
    with probability K * cum_beta (which may coincide with x_0), otherwise
    x_0 unchanged.

    Args:
        x_0: Integer array (n, N) of clean tokens in 1..K
        t: Integer array (n,) of timesteps in 0..T
        schedule: Noise schedule
        rng: Random generator

    Returns:
        Integer array (n, N) of noisy tokens
    """
    x_0 = np.asarray(x_0, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    K = schedule.K
    cg = schedule.cum_gamma[t][:, None]
    replace = (K * schedule.cum_beta[t])[:, None]

    u = rng.random(x_0.shape)
    fresh = rng.integers(1, K + 1, size=x_0.shape)
    x_t = np.where(u < cg, mask_token(K), np.where(u < cg + replace, fresh, x_0))
    return x_t.astype(np.int64)


def sample_forward(x_0: TokenGrid, t: int, schedule: NoiseSchedule,
                   rng: np.random.Generator) -> TokenGrid:
    """
    Sample x_t ~ q(x_t | x_0) independently per position.

    Args:
        x_0: Clean grid (no MASK tokens)
        t: Timestep in 0..T
        schedule: Noise schedule
        rng: Random generator

    Returns:
        Noisy grid
    """
    x_0.validate(schedule.K, allow_mask=False)
    if not 0 <= t <= schedule.T:
        raise ConfigurationError(f"timestep {t} outside [0, {schedule.T}]")
    if t == 0:
        return x_0
    noisy = sample_forward_batch(x_0.tokens[None, :], np.array([t]), schedule, rng)
    return TokenGrid(x_0.h, x_0.w, noisy[0])


def _reverse_rates(schedule: NoiseSchedule, t_to: int, t_from: int) -> Rates:
    if not 0 <= t_from < t_to <= schedule.T:
        raise ConfigurationError(f"reverse step requires 0 <= t_from < t_to <= {schedule.T}, got {t_to} -> {t_from}")
    if t_from == t_to - 1:
        return schedule.rates(t_to)
    return segment_rates(schedule, t_from, t_to)


def _forward_likelihood(x_t: np.ndarray, rates: Rates, K: int) -> np.ndarray:
    """Rows q(x_t = v | x_prev = k) over k = 1..K+1, one row per entry of x_t."""
    alpha, beta, gamma = rates
    x_t = np.asarray(x_t, dtype=np.int64)
    lik = np.zeros((x_t.size, K + 1))
    is_mask = x_t == mask_token(K)
    lik[is_mask, :K] = gamma
    lik[is_mask, K] = 1.0
    real = np.flatnonzero(~is_mask)
    lik[real, :K] = beta
    lik[real, x_t[real] - 1] += alpha
    return lik


def posterior_table(x_t: np.ndarray, t_to: int, t_from: int,
                    schedule: NoiseSchedule) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unnormalized q(x_{t_from} | x_{t_to}, x_0) for every position and every x_0.

    Args:
        x_t: Integer array (N,) of tokens at t_to
        t_to: Later timestep
        t_from: Earlier timestep
        schedule: Noise schedule

    Returns:
        (weights, normalizers): weights has shape (N, K, K+1) indexed by
        position, x_0 - 1 and x_{t_from} - 1; normalizers has shape (N, K)
        and is zero where x_t is unreachable from x_0
    """
    K = schedule.K
    forward = _forward_likelihood(x_t, _reverse_rates(schedule, t_to, t_from), K)
    prior = np.stack([cumulative_column(j, schedule.cumulative(t_from), K) for j in range(1, K + 1)])
    weights = prior[None, :, :] * forward[:, None, :]
    return weights, weights.sum(axis=2)


def strided_posterior(x_t_i: int, x_0_i: int, t_to: int, t_from: int,
                      schedule: NoiseSchedule) -> np.ndarray:
    """
    q(x_{t_from} | x_{t_to}, x_0) for a single position.

    The forward factor uses the segment rates of Q_{t_to}···Q_{t_from+1};
    with t_from = t_to - 1 this is the single-step posterior.

    Returns:
        Probability vector of length K + 1
    """
    K = schedule.K
    _check_token(x_t_i, K)
    x_0_i = _check_token(x_0_i, K, allow_mask=False)
    weights, norm = posterior_table(np.array([x_t_i]), t_to, t_from, schedule)
    z = norm[0, x_0_i - 1]
    if z <= 0.0:
        raise UnreachableStateError(f"x_t={x_t_i} is unreachable from x_0={x_0_i} between t={t_from} and t={t_to}")
    return weights[0, x_0_i - 1] / z


def posterior(x_t_i: int, x_0_i: int, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """q(x_{t-1} | x_t, x_0) for a single position, 1 <= t <= T."""
    return strided_posterior(x_t_i, x_0_i, t, t - 1, schedule)


def reverse_step_probs(x_t: np.ndarray, x0_probs: np.ndarray, t_to: int, t_from: int,
                       schedule: NoiseSchedule) -> np.ndarray:
    """
    p(x_{t_from} | x_{t_to}) per position via the reparameterized sum over x_0.

    Candidates x_0 from which x_t is unreachable are dropped from the
    mixture. When the prediction puts no mass on any reachable candidate,
    the reachable candidates are weighted uniformly.

    Args:
        x_t: Integer array (N,) of tokens at t_to
        x0_probs: Array (N, K) of clean-token predictions
        t_to: Later timestep
        t_from: Earlier timestep
        schedule: Noise schedule

    Returns:
        Array (N, K+1) of reverse-step distributions
    """
    x0_probs = np.atleast_2d(np.asarray(x0_probs, dtype=np.float64))
    weights, norm = posterior_table(x_t, t_to, t_from, schedule)
    reachable = norm > 0.0

    if not np.all(reachable.any(axis=1)):
        bad = int(np.flatnonzero(~reachable.any(axis=1))[0])
        raise UnreachableStateError(f"position {bad}: x_t unreachable from every x_0 between t={t_from} and t={t_to}")

    mix = np.where(reachable, x0_probs, 0.0)
    empty = mix.sum(axis=1) <= 0.0
    if np.any(empty):
        logger.debug(f"prediction has no reachable mass at {int(empty.sum())} position(s); using uniform fallback")
        mix[empty] = reachable[empty].astype(np.float64)
    mix = normalize_rows(mix)

    safe_norm = np.where(reachable, norm, 1.0)
    conditional = weights / safe_norm[:, :, None]
    out = np.einsum('nj,njk->nk', mix, conditional)
    return normalize_rows(out)


def reverse_step_dist(x_t_i: int, x0_probs: np.ndarray, t_to: int, t_from: int,
                      schedule: NoiseSchedule) -> np.ndarray:
    """
    Single-position form of reverse_step_probs.

    Args:
        x_t_i: Token id at t_to
        x0_probs: Length-K clean-token distribution
        t_to: Later timestep
        t_from: Earlier timestep
        schedule: Noise schedule

    Returns:
        Probability vector of length K + 1
    """
    _check_token(x_t_i, schedule.K)
    return reverse_step_probs(np.array([x_t_i]), np.asarray(x0_probs)[None, :], t_to, t_from, schedule)[0]


def sample_reverse_step(x_t: TokenGrid, x0_probs: np.ndarray, t_to: int, t_from: int,
                        schedule: NoiseSchedule, rng: np.random.Generator) -> TokenGrid:
    """Draw every position of x_{t_from} independently."""
    probs = reverse_step_probs(x_t.tokens, x0_probs, t_to, t_from, schedule)
    return TokenGrid(x_t.h, x_t.w, sample_categorical_rows(probs, rng) + 1)


def mask_persistence(t_to: int, t_from: int, schedule: NoiseSchedule) -> float:
    """
    Probability that a MASK at t_to is still MASK at t_from.

    It does not depend on x_0: cum_gamma[t_from] / cum_gamma[t_to].
    """
    if not 0 <= t_from <= t_to <= schedule.T:
        raise ConfigurationError(f"requires 0 <= t_from <= t_to <= {schedule.T}, got {t_to} -> {t_from}")
    denom = schedule.cum_gamma[t_to]
    if denom <= 0.0:
        raise ConfigurationError(f"cum_gamma[{t_to}] is 0; no MASK can exist at that step")
    if t_from == t_to:
        return 1.0
    return float(schedule.cum_gamma[t_from] / denom)
