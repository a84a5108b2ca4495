"""
Shared fixtures: small schedules, template sets and denoisers.
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from diffusion.schedule import build_linear_schedule
from denoising.denoiser import OracleDenoiser
from toybench.datasets import make_pairs_dataset

A, B = 1, 2
MASK2 = 3  # MASK for K = 2


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def pairs():
    return make_pairs_dataset()


@pytest.fixture
def pairs_schedule():
    return build_linear_schedule(4, 2)


@pytest.fixture
def pairs_oracle(pairs, pairs_schedule):
    return OracleDenoiser(pairs, pairs_schedule)


@pytest.fixture
def noisy_schedule():
    return build_linear_schedule(4, 2, eps_beta=0.1)
