"""
Denoisers predicting p(x~_0 | x_t, y) per position.

Two kinds share one interface:
- OracleDenoiser: exact Bayes posterior over a TemplateSet.
- CountDenoiser: per-position count tables fitted on simulated corruptions,
  with a NULL row trained by condition dropout.
"""
import abc
import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from diffusion.grid import TokenGrid, mask_token
from diffusion.schedule import NoiseSchedule
from diffusion.transition import sample_forward_batch
from denoising.templates import NULL, TemplateSet, check_condition
from lib.errors import ConfigurationError, OffManifoldError
from utils.numeric import normalize_rows

logger = logging.getLogger(__name__)

# Pseudo-count added to every cell of a count table.
LAPLACE_SMOOTHING = 1.0

OFF_MANIFOLD_MODES = ("raise", "nearest")


class Denoiser(abc.ABC):
    """
    Common interface: predict(x_t, t, cond) returns an (N, K) ProbField.
    """
    K: int
    h: int
    w: int
    classes: int
    schedule: NoiseSchedule

    @abc.abstractmethod
    def _predict(self, tokens: np.ndarray, t: int, cond: int) -> np.ndarray:
        """Row-stochastic (N, K) prediction for validated inputs."""

    def predict(self, x_t: TokenGrid, t: int, cond: int) -> np.ndarray:
        """
        Predict the clean-token distribution at every position.

        Args:
            x_t: Noisy grid
            t: Timestep in 1..T
            cond: Class label or NULL

        Returns:
            Array (N, K) whose rows sum to 1
        """
        if (x_t.h, x_t.w) != (self.h, self.w):
            raise ConfigurationError(f"grid shape {x_t.h}x{x_t.w} does not match denoiser {self.h}x{self.w}")
        x_t.validate(self.K)
        if not 1 <= t <= self.schedule.T:
            raise ConfigurationError(f"timestep {t} outside [1, {self.schedule.T}]")
        cond = check_condition(cond, self.classes)
        return self._predict(x_t.tokens, t, cond)

    def untrained_null(self, x_t: TokenGrid) -> np.ndarray:
        """
        Output of a null slot that never saw training data: the smoothing
        prior, uniform over K at every position.
        """
        return np.full((x_t.size, self.K), 1.0 / self.K)


class OracleDenoiser(Denoiser):
    """
    Exact Bayes posterior over the templates of a TemplateSet.

    weight_m ∝ prior(m | cond) · Π_i q(x_t^i | template_m^i), and the
    prediction at position i is the weighted vote of template tokens.
    """

    def __init__(self, templates: TemplateSet, schedule: NoiseSchedule, off_manifold: str = "raise"):
        """
        Args:
            templates: Data distribution
            schedule: Noise schedule sharing K with the templates
            off_manifold: 'raise' to reject states no template can produce,
                'nearest' to fall back to the templates with the fewest
                impossible positions
        """
        if templates.k != schedule.K:
            raise ConfigurationError(f"template K={templates.k} differs from schedule K={schedule.K}")
        if off_manifold not in OFF_MANIFOLD_MODES:
            raise ConfigurationError(f"off_manifold must be one of {OFF_MANIFOLD_MODES}, got {off_manifold!r}")
        self.templates = templates
        self.schedule = schedule
        self.off_manifold = off_manifold
        self.K = templates.k
        self.h, self.w = templates.h, templates.w
        self.classes = templates.classes
        self._one_hot = np.eye(self.K)[templates.tokens - 1]

    def _likelihoods(self, tokens: np.ndarray, t: int) -> np.ndarray:
        """Per-template, per-position q(x_t^i | template_m^i), shape (M, N)."""
        ca, cb, cg = self.schedule.cumulative(t)
        tpl = self.templates.tokens
        is_mask = (tokens == mask_token(self.K))[None, :]
        match = tpl == tokens[None, :]
        return np.where(is_mask, cg, np.where(match, ca + cb, cb))

    def _template_weights(self, tokens: np.ndarray, t: int, cond: int) -> np.ndarray:
        lik = self._likelihoods(tokens, t)
        prior = self.templates.prior(cond)
        if not np.any(prior > 0):
            raise ConfigurationError(f"class {cond} has no templates")
        weights = prior * lik.prod(axis=1)

        if weights.sum() <= 0.0:
            if self.off_manifold == "raise":
                raise OffManifoldError(f"state {tokens.tolist()} at t={t} is unreachable from every template")
            impossible = (lik <= 0.0).sum(axis=1)
            candidates = prior > 0
            fewest = impossible[candidates].min()
            keep = candidates & (impossible == fewest)
            weights = np.where(keep, prior * np.where(lik > 0.0, lik, 1.0).prod(axis=1), 0.0)
            logger.debug(f"off-manifold state at t={t}; {int(keep.sum())} nearest template(s) with {int(fewest)} mismatch(es)")
            if weights.sum() <= 0.0:
                raise OffManifoldError(f"state {tokens.tolist()} at t={t} has no usable template")

        return normalize_rows(weights)

    def _predict(self, tokens: np.ndarray, t: int, cond: int) -> np.ndarray:
        weights = self._template_weights(tokens, t, cond)
        out = np.einsum("m,mnk->nk", weights, self._one_hot)
        return normalize_rows(out)

    def class_posterior(self, x_t: TokenGrid, t: int) -> np.ndarray:
        """
        P(y | x_t) for y = 1..classes under the exact model.

        Returns:
            Array of length classes summing to 1
        """
        weights = self._template_weights(x_t.tokens, t, NULL)
        labels = self.templates.labels
        return np.array([weights[labels == y].sum() for y in range(1, self.classes + 1)])


def exact_bayes_predict(templates: TemplateSet, x_t: TokenGrid, t: int, cond: int,
                        schedule: NoiseSchedule) -> np.ndarray:
    """Exact posterior prediction; raises OffManifoldError on unreachable states."""
    return OracleDenoiser(templates, schedule).predict(x_t, t, cond)


class CountDenoiser(Denoiser):
    """
    Factorized denoiser: position i sees only its own noisy token.

    counts[t-1, cond, v-1, j-1] counts draws where the noisy token was v and
    the clean token j, for condition cond (0 = NULL). Every cell starts at
    the Laplace pseudo-count, so predictions are strictly positive.
    """

    def __init__(self, counts: np.ndarray, schedule: NoiseSchedule, h: int, w: int,
                 drop_frac: float, n_draws: int = 0, smoothing: float = LAPLACE_SMOOTHING):
        counts = np.array(counts, dtype=np.float64)
        K = schedule.K
        if counts.ndim != 4 or counts.shape[0] != schedule.T or counts.shape[2:] != (K + 1, K):
            raise ConfigurationError(f"count table shape {counts.shape} does not fit T={schedule.T}, K={K}")
        counts.setflags(write=False)
        self.counts = counts
        self.schedule = schedule
        self.K = K
        self.h, self.w = h, w
        self.classes = counts.shape[1] - 1
        self.drop_frac = float(drop_frac)
        self.n_draws = int(n_draws)
        self.smoothing = float(smoothing)

    def _predict(self, tokens: np.ndarray, t: int, cond: int) -> np.ndarray:
        rows = self.counts[t - 1, cond, tokens - 1, :]
        return normalize_rows(rows)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schedule_hash": self.schedule.fingerprint(),
            "K": self.K,
            "T": self.schedule.T,
            "C": self.classes,
            "h": self.h,
            "w": self.w,
            "drop_frac": self.drop_frac,
            "n_draws": self.n_draws,
            "smoothing": self.smoothing,
            "counts": np.rint(self.counts - self.smoothing).astype(np.int64).tolist(),
        }

    def save(self, path: Union[str, Path]) -> None:
        """Write the fitted tables as one JSON document."""
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, data: Dict[str, Any], schedule: NoiseSchedule) -> "CountDenoiser":
        if data.get("schedule_hash") != schedule.fingerprint():
            raise ConfigurationError("denoiser was fitted on a different schedule (schedule_hash mismatch)")
        smoothing = float(data.get("smoothing", LAPLACE_SMOOTHING))
        counts = np.asarray(data["counts"], dtype=np.float64) + smoothing
        return cls(counts, schedule, int(data["h"]), int(data["w"]), float(data["drop_frac"]),
                   int(data.get("n_draws", 0)), smoothing)

    @classmethod
    def load(cls, path: Union[str, Path], schedule: NoiseSchedule) -> "CountDenoiser":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"denoiser file not found: {path}")
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), schedule)


def fit_count_denoiser(templates: TemplateSet, schedule: NoiseSchedule, n_draws: int,
                       drop_frac: float, rng: np.random.Generator,
                       batch_size: int = 50_000) -> CountDenoiser:
    """
    Fit count tables on simulated forward corruptions.

    Each draw picks a template by weight, a timestep uniformly in 1..T and
    corrupts the template; with probability drop_frac its condition is
    replaced by NULL.

    Args:
        templates: Data distribution
        schedule: Noise schedule
        n_draws: Number of simulated corruptions (>= 1)
        drop_frac: Condition dropout rate in [0, 1]
        rng: Random generator
        batch_size: Draws simulated per vectorized batch

    Returns:
        Fitted CountDenoiser
    """
    if n_draws < 1:
        raise ConfigurationError(f"n_draws must be >= 1, got {n_draws}")
    if not 0.0 <= drop_frac <= 1.0:
        raise ConfigurationError(f"drop_frac must be in [0, 1], got {drop_frac}")
    if templates.k != schedule.K:
        raise ConfigurationError(f"template K={templates.k} differs from schedule K={schedule.K}")

    K, T, N = schedule.K, schedule.T, templates.size
    counts = np.zeros((T, templates.classes + 1, K + 1, K))

    done = 0
    while done < n_draws:
        n = min(batch_size, n_draws - done)
        m = rng.choice(len(templates), size=n, p=templates.weights)
        t = rng.integers(1, T + 1, size=n)
        cond = np.where(rng.random(n) < drop_frac, NULL, templates.labels[m])
        clean = templates.tokens[m]
        noisy = sample_forward_batch(clean, t, schedule, rng)

        idx_t = np.broadcast_to((t - 1)[:, None], (n, N))
        idx_c = np.broadcast_to(cond[:, None], (n, N))
        np.add.at(counts, (idx_t, idx_c, noisy - 1, clean - 1), 1.0)
        done += n
        logger.debug(f"fitted {done}/{n_draws} draws")

    logger.info(f"count denoiser fitted: {n_draws} draws, table {counts.shape}, drop_frac={drop_frac:g}")
    return CountDenoiser(counts + LAPLACE_SMOOTHING, schedule, templates.h, templates.w,
                         drop_frac, n_draws)


def predict(denoiser: Denoiser, x_t: TokenGrid, t: int, cond: int) -> np.ndarray:
    """Uniform dispatch over denoiser kinds."""
    return denoiser.predict(x_t, t, cond)
