"""
Inference strategies for the mask-and-replace diffusion.

- vanilla: ancestral sampling through every timestep
- fast: the same chain over a uniformly strided subsequence of timesteps
- fewer_token: recover delta_z uniformly chosen masked positions per step
- purity: recover delta_z masked positions chosen by purity, with the
  clean-token prediction sharpened by purity before sampling values
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from diffusion.grid import TokenGrid
from diffusion.schedule import NoiseSchedule
from diffusion.transition import reverse_step_probs
from denoising.denoiser import Denoiser
from denoising.guidance import GuidanceConfig, guided_predict
from denoising.templates import NULL
from lib.errors import ConfigurationError, OffManifoldError, SamplingFailure
from sampling.selection import Selection, select_top_k, select_uniform, select_weighted
from sampling.trace import SampleTrace
from utils.numeric import normalize_rows, sample_categorical_rows

logger = logging.getLogger(__name__)

# Distances to cum_gamma within this tolerance count as ties.
TIE_TOL = 1e-12

Seed = Union[int, Sequence[int]]


class Strategy(str, Enum):
    VANILLA = "vanilla"
    FAST = "fast"
    FEWER_TOKEN = "fewer_token"
    PURITY = "purity"


class SamplerConfig(BaseModel):
    """
    Sampling strategy and its parameters.

    inference_steps is T' for the fast strategy (None means T). delta_z is
    the number of tokens recovered per step for fewer_token and purity.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    strategy: Strategy = Strategy.FEWER_TOKEN
    inference_steps: Optional[int] = Field(default=None, ge=1)
    delta_z: int = Field(default=1, ge=1)
    purity_scale: float = Field(default=1.0, ge=0.0)
    selection: Selection = Selection.WEIGHTED
    guidance: GuidanceConfig = Field(default_factory=GuidanceConfig)
    seed: int = 0
    max_restarts: int = Field(default=10, ge=0)


def init_state(schedule: NoiseSchedule, h: int, w: int, rng: np.random.Generator) -> TokenGrid:
    """
    Draw x_T position by position from the terminal distribution.

    Token j has probability cum_beta[T] + cum_alpha[T] / K (the clean token
    taken as uniform) and MASK has probability cum_gamma[T]. Under a
    schedule ending fully masked this is the all-MASK grid.
    """
    K, T = schedule.K, schedule.T
    ca, cb, cg = schedule.cumulative(T)
    row = np.empty(K + 1)
    row[:K] = cb + ca / K
    row[K] = cg
    probs = np.broadcast_to(row, (h * w, K + 1))
    return TokenGrid(h, w, sample_categorical_rows(probs, rng) + 1)


def _predict_x0(denoiser: Denoiser, x_t: TokenGrid, t: int, cond: int, cfg: SamplerConfig) -> np.ndarray:
    if int(cond) == NULL:
        return denoiser.predict(x_t, t, NULL)
    return guided_predict(denoiser, x_t, t, cond, cfg.guidance)


def strided_timesteps(T: int, steps: int) -> List[int]:
    """Decreasing timesteps T = t_0 > t_1 > ... > t_steps = 0, uniform in t."""
    if not 1 <= steps <= T:
        raise ConfigurationError(f"inference steps must be in [1, {T}], got {steps}")
    return [T - (k * T) // steps for k in range(steps + 1)]


def _strided_chain(denoiser: Denoiser, cond: int, cfg: SamplerConfig, schedule: NoiseSchedule,
                   rng: np.random.Generator, steps: int) -> SampleTrace:
    K = schedule.K
    visited = strided_timesteps(schedule.T, steps)
    x = init_state(schedule, denoiser.h, denoiser.w, rng)
    trace = SampleTrace()
    trace.record(schedule.T, x, K)

    for t_to, t_from in zip(visited[:-1], visited[1:]):
        if schedule.is_absorbing and x.mask_count(K) == 0:
            break
        x0_probs = _predict_x0(denoiser, x, t_to, cond, cfg)
        probs = reverse_step_probs(x.tokens, x0_probs, t_to, t_from, schedule)
        new = TokenGrid(x.h, x.w, sample_categorical_rows(probs, rng) + 1)
        recovered = np.flatnonzero((x.tokens == K + 1) & (new.tokens != K + 1))
        x = new
        trace.record(t_from, x, K, recovered)
        logger.debug(f"t={t_to} -> {t_from}: {x.mask_count(K)} mask(s) left")
    return trace


def vanilla_sample(denoiser: Denoiser, cond: int, cfg: SamplerConfig, schedule: NoiseSchedule,
                   rng: np.random.Generator) -> SampleTrace:
    """
    Ancestral sampling t = T..1, every position drawn independently per step.

    Args:
        denoiser: Clean-token predictor
        cond: Class label or NULL
        cfg: Sampler settings (guidance is used when cond is a class)
        schedule: Noise schedule
        rng: Random generator

    Returns:
        SampleTrace ending at t = 0
    """
    return _strided_chain(denoiser, cond, cfg, schedule, rng, schedule.T)


def fast_sample(denoiser: Denoiser, cond: int, cfg: SamplerConfig, schedule: NoiseSchedule,
                rng: np.random.Generator) -> SampleTrace:
    """
    Strided ancestral sampling over T' = cfg.inference_steps visited steps.

    T' = T reproduces vanilla_sample; T' = 1 is a one-shot decode from the
    prediction at t = T.
    """
    steps = cfg.inference_steps if cfg.inference_steps is not None else schedule.T
    return _strided_chain(denoiser, cond, cfg, schedule, rng, steps)


def timestep_from_mask_count(schedule: NoiseSchedule, mask_count: int, hw: int) -> int:
    """
    The t in 0..T whose cum_gamma is closest to mask_count / hw.

    Ties go to the smaller t.
    """
    if hw < 1 or not 0 <= mask_count <= hw:
        raise ConfigurationError(f"mask_count must be in [0, {hw}], got {mask_count}")
    dist = np.abs(mask_count / hw - np.asarray(schedule.cum_gamma))
    return int(np.flatnonzero(dist <= dist.min() + TIE_TOL)[0])


def _require_mask_only(schedule: NoiseSchedule) -> None:
    if not schedule.ends_fully_masked:
        raise ConfigurationError("token-recovery strategies need cum_gamma[T] = 1")
    if not schedule.is_absorbing:
        raise ConfigurationError("token-recovery strategies need a pure-mask schedule (eps_beta = 0)")


def _next_timestep(schedule: NoiseSchedule, x: TokenGrid) -> int:
    masks = x.mask_count(schedule.K)
    if masks == 0:
        return 0
    return max(timestep_from_mask_count(schedule, masks, x.size), 1)


def fewer_token_sample(denoiser: Denoiser, cond: int, cfg: SamplerConfig, schedule: NoiseSchedule,
                       rng: np.random.Generator) -> SampleTrace:
    """
    Recover delta_z uniformly chosen masked positions per step.

    Recovered values are drawn from the clean-token prediction, so they
    never stay MASK. The timestep is re-estimated from the mask count.

    Args:
        denoiser: Clean-token predictor
        cond: Class label or NULL
        cfg: Sampler settings; delta_z is read from here
        schedule: Pure-mask schedule ending fully masked
        rng: Random generator

    Returns:
        SampleTrace with ceil(H*W / delta_z) iterations
    """
    _require_mask_only(schedule)
    K = schedule.K
    x = init_state(schedule, denoiser.h, denoiser.w, rng)
    t = schedule.T
    trace = SampleTrace()
    trace.record(t, x, K)

    while x.mask_count(K) > 0:
        chosen = select_uniform(x.mask_positions(K), cfg.delta_z, rng)
        x0_probs = _predict_x0(denoiser, x, t, cond, cfg)
        values = sample_categorical_rows(x0_probs[chosen], rng) + 1
        x = x.replace(chosen, values)
        t = _next_timestep(schedule, x)
        trace.record(t, x, K, chosen)
    return trace


def purity(x0_probs: np.ndarray, i: int) -> float:
    """Confidence of position i: its largest clean-token probability."""
    return float(np.max(np.asarray(x0_probs)[i]))


def purity_scores(x0_probs: np.ndarray) -> np.ndarray:
    """Purity of every position, shape (N,)."""
    return np.max(np.atleast_2d(x0_probs), axis=1)


def purity_sharpen(x0_probs: np.ndarray, r: float) -> np.ndarray:
    """
    Raise each row to the power 1 + purity * r and renormalize.

    Args:
        x0_probs: Array (N, K) of clean-token predictions
        r: Purity scale (>= 0)

    Returns:
        Array (N, K)
    """
    if r < 0:
        raise ConfigurationError(f"purity scale must be >= 0, got {r}")
    probs = np.atleast_2d(np.asarray(x0_probs, dtype=np.float64))
    exponent = 1.0 + purity_scores(probs) * r
    sharpened = np.power(probs, exponent[:, None])
    return normalize_rows(sharpened)


def purity_sample(denoiser: Denoiser, cond: int, cfg: SamplerConfig, schedule: NoiseSchedule,
                  rng: np.random.Generator) -> SampleTrace:
    """
    Recover delta_z masked positions per step, chosen by purity.

    Positions are drawn proportionally to purity without replacement
    (selection=weighted) or taken highest first (selection=top_k). Purity
    is measured before sharpening; values come from the sharpened rows.
    """
    _require_mask_only(schedule)
    K = schedule.K
    x = init_state(schedule, denoiser.h, denoiser.w, rng)
    t = schedule.T
    trace = SampleTrace()
    trace.record(t, x, K)

    while x.mask_count(K) > 0:
        masked = x.mask_positions(K)
        x0_probs = _predict_x0(denoiser, x, t, cond, cfg)
        scores = purity_scores(x0_probs)[masked]
        if cfg.selection == Selection.TOP_K:
            chosen = select_top_k(masked, scores, cfg.delta_z)
        else:
            chosen = select_weighted(masked, scores, cfg.delta_z, rng)
        sharpened = purity_sharpen(x0_probs[chosen], cfg.purity_scale)
        values = sample_categorical_rows(sharpened, rng) + 1
        x = x.replace(chosen, values)
        t = _next_timestep(schedule, x)
        trace.record(t, x, K, chosen)
    return trace


STRATEGIES = {
    Strategy.VANILLA: vanilla_sample,
    Strategy.FAST: fast_sample,
    Strategy.FEWER_TOKEN: fewer_token_sample,
    Strategy.PURITY: purity_sample,
}


def _derived_seed(seed: Seed, attempt: int):
    if attempt == 0:
        return seed
    base = [seed] if isinstance(seed, (int, np.integer)) else list(seed)
    return [*base, attempt]


class DiffusionSampler:
    """
    Runs sampling chains for one denoiser, schedule and configuration.

    Denoiser and schedule are shared read-only, so chains with distinct
    seeds may run on separate threads.
    """

    def __init__(self, denoiser: Denoiser, schedule: NoiseSchedule, config: SamplerConfig):
        """
        Args:
            denoiser: Clean-token predictor
            schedule: Noise schedule the denoiser was built for
            config: Sampler settings
        """
        if denoiser.schedule.fingerprint() != schedule.fingerprint():
            raise ConfigurationError("denoiser and sampler use different schedules")
        config.guidance.check_vocabulary(schedule.K)
        if config.strategy in (Strategy.FEWER_TOKEN, Strategy.PURITY):
            _require_mask_only(schedule)
        if config.strategy == Strategy.FAST and config.inference_steps is not None:
            strided_timesteps(schedule.T, config.inference_steps)
        self.denoiser = denoiser
        self.schedule = schedule
        self.config = config

    def sample(self, cond: int, rng: np.random.Generator) -> SampleTrace:
        """Run one chain with the configured strategy."""
        strategy = STRATEGIES[self.config.strategy]
        return strategy(self.denoiser, cond, self.config, self.schedule, rng)

    def run_chain(self, cond: int, seed: Seed) -> SampleTrace:
        """
        Run one chain, restarting on off-manifold states.

        Attempt 0 uses seed as given; restart k uses [seed, k].

        Args:
            cond: Class label or NULL
            seed: Integer seed or seed sequence

        Returns:
            SampleTrace of the first successful attempt
        """
        for attempt in range(self.config.max_restarts + 1):
            rng = np.random.default_rng(_derived_seed(seed, attempt))
            try:
                trace = self.sample(cond, rng)
            except OffManifoldError as e:
                logger.warning(f"chain seed={seed} attempt {attempt} left the data manifold: {e}")
                continue
            trace.restarts = attempt
            return trace
        raise SamplingFailure(f"chain seed={seed} failed after {self.config.max_restarts} restart(s)")

    def run_chains(self, cond: int, seeds: Sequence[Seed], jobs: int = 1) -> List[SampleTrace]:
        """
        Run independent chains, one per seed.

        Args:
            cond: Class label or NULL
            seeds: One seed per chain
            jobs: Worker threads (>= 1)

        Returns:
            Traces in the order of seeds
        """
        if jobs < 1:
            raise ConfigurationError(f"jobs must be >= 1, got {jobs}")
        seeds = list(seeds)
        if jobs == 1 or len(seeds) <= 1:
            return [self.run_chain(cond, s) for s in seeds]
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(lambda s: self.run_chain(cond, s), seeds))
