"""
Sampling strategies, position selection and chain traces.
"""
from .selection import Selection, select_uniform, select_weighted, select_top_k
from .trace import SampleTrace, TraceStep
from .sampler import (
    Strategy,
    SamplerConfig,
    DiffusionSampler,
    init_state,
    strided_timesteps,
    vanilla_sample,
    fast_sample,
    timestep_from_mask_count,
    fewer_token_sample,
    purity,
    purity_scores,
    purity_sharpen,
    purity_sample,
)

__all__ = [
    'Selection',
    'select_uniform',
    'select_weighted',
    'select_top_k',
    'SampleTrace',
    'TraceStep',
    'Strategy',
    'SamplerConfig',
    'DiffusionSampler',
    'init_state',
    'strided_timesteps',
    'vanilla_sample',
    'fast_sample',
    'timestep_from_mask_count',
    'fewer_token_sample',
    'purity',
    'purity_scores',
    'purity_sharpen',
    'purity_sample',
]
