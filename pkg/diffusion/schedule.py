"""
Mask-and-replace noise schedules.

A schedule stores per-step rates (alpha, beta, gamma) and the cumulative
rates of Q_t···Q_1 for t = 0..T. Index 0 is the identity state, so every
array has length T + 1 and can be indexed directly by timestep.
"""
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from lib.errors import ConfigurationError

logger = logging.getLogger(__name__)

# Derived betas below -BETA_TOL are rejected; values within BETA_TOL of 0 become 0.
BETA_TOL = 1e-12

Rates = Tuple[float, float, float]


def _snap_nonnegative(values: np.ndarray) -> np.ndarray:
    # rounding residue of 1 - alpha - gamma is treated as exact zero
    values = np.array(values, dtype=np.float64)
    values[values <= BETA_TOL] = 0.0
    return values


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """
    Per-step and cumulative corruption rates over T steps and K tokens.

    Arrays are read-only; the schedule is safe to share between threads.
    """
    T: int
    K: int
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    cum_alpha: np.ndarray
    cum_beta: np.ndarray
    cum_gamma: np.ndarray

    @classmethod
    def from_cumulative(cls, cum_alpha, cum_gamma, K: int) -> "NoiseSchedule":
        """
        Build a schedule from cumulative curves for t = 1..T.

        Args:
            cum_alpha: Non-increasing values in [0, 1], length T
            cum_gamma: Non-decreasing values in [0, 1], length T
            K: Vocabulary size excluding MASK

        Returns:
            NoiseSchedule with per-step rates recovered from the ratios
        """
        if K < 1:
            raise ConfigurationError(f"K must be >= 1, got {K}")

        ca = np.concatenate([[1.0], np.asarray(cum_alpha, dtype=np.float64)])
        cg = np.concatenate([[0.0], np.asarray(cum_gamma, dtype=np.float64)])
        if ca.shape != cg.shape or ca.ndim != 1 or len(ca) < 2:
            raise ConfigurationError("cum_alpha and cum_gamma must be equal-length 1-D sequences with T >= 1")
        T = len(ca) - 1

        if np.any(ca < 0) or np.any(ca > 1) or np.any(cg < 0) or np.any(cg > 1):
            raise ConfigurationError("cumulative rates must lie in [0, 1]")
        if np.any(np.diff(ca) > 0):
            raise ConfigurationError("cum_alpha must be non-increasing")
        if np.any(np.diff(cg) < 0):
            raise ConfigurationError("cum_gamma must be non-decreasing")

        cb = (1.0 - ca - cg) / K
        if np.any(cb < -BETA_TOL):
            raise ConfigurationError("cum_alpha + cum_gamma exceeds 1; cum_beta would be negative")
        cb = _snap_nonnegative(cb)

        alpha = np.ones(T + 1)
        gamma = np.zeros(T + 1)
        for t in range(1, T + 1):
            alpha[t] = ca[t] / ca[t - 1] if ca[t - 1] > 0 else 0.0
            gamma[t] = (cg[t] - cg[t - 1]) / (1.0 - cg[t - 1]) if cg[t - 1] < 1 else 1.0

        beta = (1.0 - alpha - gamma) / K
        bad = np.flatnonzero(beta < -BETA_TOL)
        if bad.size:
            raise ConfigurationError(f"derived beta[{int(bad[0])}] = {beta[bad[0]]:.3e} is negative")
        beta = _snap_nonnegative(beta)
        beta[0] = 0.0

        return cls(
            T=T, K=K,
            alpha=_frozen(alpha), beta=_frozen(beta), gamma=_frozen(gamma),
            cum_alpha=_frozen(ca), cum_beta=_frozen(cb), cum_gamma=_frozen(cg),
        )

    def rates(self, t: int) -> Rates:
        """Per-step (alpha, beta, gamma) of Q_t, 1 <= t <= T."""
        if not 1 <= t <= self.T:
            raise ConfigurationError(f"timestep {t} outside [1, {self.T}]")
        return float(self.alpha[t]), float(self.beta[t]), float(self.gamma[t])

    def cumulative(self, t: int) -> Rates:
        """Cumulative (cum_alpha, cum_beta, cum_gamma) of Q_t···Q_1, 0 <= t <= T."""
        if not 0 <= t <= self.T:
            raise ConfigurationError(f"timestep {t} outside [0, {self.T}]")
        return float(self.cum_alpha[t]), float(self.cum_beta[t]), float(self.cum_gamma[t])

    @property
    def is_absorbing(self) -> bool:
        """True when no replace noise is ever applied."""
        return bool(np.all(self.beta == 0.0))

    @property
    def ends_fully_masked(self) -> bool:
        return bool(abs(self.cum_gamma[self.T] - 1.0) <= BETA_TOL)

    def fingerprint(self) -> str:
        """
        Stable SHA-256 hash of (T, K, cumulative curves).

        Returns:
            Hex digest used as schedule_hash in persisted denoisers
        """
        h = hashlib.sha256()
        h.update(f"T={self.T};K={self.K};".encode())
        for arr in (self.cum_alpha, self.cum_beta, self.cum_gamma):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()

    def to_frame(self) -> pd.DataFrame:
        """One row per t = 1..T with per-step and cumulative rates."""
        steps = np.arange(1, self.T + 1)
        return pd.DataFrame({
            't': steps,
            'alpha': self.alpha[1:],
            'beta': self.beta[1:],
            'gamma': self.gamma[1:],
            'cum_alpha': self.cum_alpha[1:],
            'cum_beta': self.cum_beta[1:],
            'cum_gamma': self.cum_gamma[1:],
        })

    def to_csv(self, path: Optional[Union[str, Path]] = None) -> Optional[str]:
        """
        Dump the schedule as CSV at 17 significant digits.

        Args:
            path: Output file; when None the CSV text is returned

        Returns:
            CSV text if path is None
        """
        return self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def build_linear_schedule(T: int, K: int, eps_beta: float = 0.0) -> NoiseSchedule:
    """
    Linear cumulative schedule ending in the all-MASK state.

    cum_gamma[t] = t/T and cum_alpha[t] = (1 - t/T)(1 - eps_beta t/T);
    eps_beta = 0 gives a pure absorbing process.

    Args:
        T: Number of diffusion steps (>= 1)
        K: Vocabulary size excluding MASK (>= 1)
        eps_beta: Replace-noise mass in [0, 1)

    Returns:
        NoiseSchedule
    """
    if T < 1:
        raise ConfigurationError(f"T must be >= 1, got {T}")
    if K < 1:
        raise ConfigurationError(f"K must be >= 1, got {K}")
    if not 0.0 <= eps_beta < 1.0:
        raise ConfigurationError(f"eps_beta must be in [0, 1), got {eps_beta}")

    frac = np.arange(1, T + 1, dtype=np.float64) / T
    cum_gamma = frac
    cum_alpha = (1.0 - frac) * (1.0 - eps_beta * frac)
    schedule = NoiseSchedule.from_cumulative(cum_alpha, cum_gamma, K)
    logger.debug(f"built linear schedule T={T} K={K} eps_beta={eps_beta:g}")
    return schedule


def segment_rates(schedule: NoiseSchedule, t_from: int, t_to: int) -> Rates:
    """
    Rates of the composite matrix Q_{t_to}···Q_{t_from+1}.

    Args:
        schedule: Noise schedule
        t_from: Start of the segment (exclusive)
        t_to: End of the segment (inclusive)

    Returns:
        (alpha_seg, beta_seg, gamma_seg)
    """
    if not 0 <= t_from < t_to <= schedule.T:
        raise ConfigurationError(f"segment requires 0 <= t_from < t_to <= {schedule.T}, got ({t_from}, {t_to})")

    ca, cg = schedule.cum_alpha, schedule.cum_gamma
    if ca[t_from] == 0.0:
        raise ConfigurationError(f"cum_alpha[{t_from}] is 0; segment rates are undefined")
    if cg[t_from] >= 1.0:
        raise ConfigurationError(f"cum_gamma[{t_from}] is 1; segment rates are undefined")

    alpha_seg = float(ca[t_to] / ca[t_from])
    gamma_seg = float((cg[t_to] - cg[t_from]) / (1.0 - cg[t_from]))
    beta_seg = (1.0 - alpha_seg - gamma_seg) / schedule.K
    if beta_seg < -BETA_TOL:
        raise ConfigurationError(f"segment ({t_from}, {t_to}) has negative beta {beta_seg:.3e}")
    if beta_seg <= BETA_TOL:
        beta_seg = 0.0
    return alpha_seg, beta_seg, gamma_seg
