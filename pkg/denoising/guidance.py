"""
Discrete classifier-free guidance on the clean-token prediction.

The guided distribution is

    g = log p(x_0 | x_t) + (s + 1) * (log p(x_0 | x_t, y) - log p(x_0 | x_t))

renormalized per position, so s = 0 leaves the conditional prediction
unchanged.
"""
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import softmax

from diffusion.grid import TokenGrid
from denoising.denoiser import Denoiser
from denoising.templates import NULL
from lib.errors import ConfigurationError


class NullMode(str, Enum):
    # the null slot was never trained: its output is the smoothing prior
    ZERO_SHOT = "zero_shot"
    # the null slot was trained by condition dropout
    LEARNABLE = "learnable"


class GuidanceConfig(BaseModel):
    """Guidance scale s, null-condition variant and log floor."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    scale: float = Field(default=0.0, ge=0.0)
    null_mode: NullMode = NullMode.LEARNABLE
    prob_floor: float = Field(default=1e-9, gt=0.0)

    def check_vocabulary(self, K: int) -> "GuidanceConfig":
        if not self.prob_floor < 1.0 / K:
            raise ConfigurationError(f"prob_floor must be below 1/K = {1.0 / K:g}, got {self.prob_floor}")
        return self


def guided_probs(cond: np.ndarray, uncond: np.ndarray, s: float, prob_floor: float = 1e-9) -> np.ndarray:
    """
    Combine conditional and unconditional predictions in log space.

    Args:
        cond: Array (N, K) conditional prediction
        uncond: Array (N, K) unconditional prediction
        s: Guidance scale (>= 0)
        prob_floor: Entries are clamped to at least this before the log

    Returns:
        Array (N, K) guided prediction
    """
    cond = np.atleast_2d(np.asarray(cond, dtype=np.float64))
    uncond = np.atleast_2d(np.asarray(uncond, dtype=np.float64))
    if cond.shape != uncond.shape:
        raise ConfigurationError(f"shape mismatch: cond {cond.shape} vs uncond {uncond.shape}")
    if s < 0:
        raise ConfigurationError(f"guidance scale must be >= 0, got {s}")

    log_c = np.log(np.maximum(cond, prob_floor))
    log_u = np.log(np.maximum(uncond, prob_floor))
    # (s+1)·log c − s·log u is the same tilt; at s = 0 it is log c exactly
    logits = (s + 1.0) * log_c - s * log_u
    return softmax(logits, axis=1)


def guided_predict(denoiser: Denoiser, x_t: TokenGrid, t: int, y: int, cfg: GuidanceConfig) -> np.ndarray:
    """
    Guided clean-token prediction for class y.

    Args:
        denoiser: Any denoiser
        x_t: Noisy grid
        t: Timestep
        y: Class label (not NULL)
        cfg: Guidance settings

    Returns:
        Array (N, K)
    """
    if int(y) == NULL:
        raise ConfigurationError("guided_predict needs a class label, got NULL")
    cond = denoiser.predict(x_t, t, y)
    if cfg.scale == 0.0:
        return cond

    if cfg.null_mode == NullMode.ZERO_SHOT:
        uncond = denoiser.untrained_null(x_t)
    else:
        uncond = denoiser.predict(x_t, t, NULL)
    return guided_probs(cond, uncond, cfg.scale, cfg.prob_floor)
