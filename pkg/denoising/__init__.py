"""
Denoisers, template sets and classifier-free guidance.
"""
from .templates import NULL, Template, TemplateSet, check_condition
from .denoiser import (
    Denoiser,
    OracleDenoiser,
    CountDenoiser,
    exact_bayes_predict,
    fit_count_denoiser,
    predict,
)
from .guidance import GuidanceConfig, NullMode, guided_probs, guided_predict

__all__ = [
    'NULL',
    'Template',
    'TemplateSet',
    'check_condition',
    'Denoiser',
    'OracleDenoiser',
    'CountDenoiser',
    'exact_bayes_predict',
    'fit_count_denoiser',
    'predict',
    'GuidanceConfig',
    'NullMode',
    'guided_probs',
    'guided_predict',
]
