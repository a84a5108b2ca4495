"""
Discrete diffusion core: noise schedules, token grids and transition math.
"""
from .grid import TokenGrid, mask_token
from .schedule import NoiseSchedule, build_linear_schedule, segment_rates
from .transition import (
    transition_column,
    cumulative_column,
    transition_matrix,
    sample_forward,
    sample_forward_batch,
    posterior,
    strided_posterior,
    reverse_step_dist,
    reverse_step_probs,
    sample_reverse_step,
    mask_persistence,
)

__all__ = [
    'TokenGrid',
    'mask_token',
    'NoiseSchedule',
    'build_linear_schedule',
    'segment_rates',
    'transition_column',
    'cumulative_column',
    'transition_matrix',
    'sample_forward',
    'sample_forward_batch',
    'posterior',
    'strided_posterior',
    'reverse_step_dist',
    'reverse_step_probs',
    'sample_reverse_step',
    'mask_persistence',
]
