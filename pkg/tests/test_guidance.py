import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from diffusion.grid import TokenGrid
from diffusion.schedule import build_linear_schedule
from denoising.denoiser import OracleDenoiser, fit_count_denoiser
from denoising.guidance import GuidanceConfig, NullMode, guided_predict, guided_probs
from denoising.templates import NULL
from lib.errors import ConfigurationError
from toybench.datasets import make_majority_dataset
from utils.numeric import is_distribution

MASK = 3


@pytest.fixture
def majority_oracle():
    ts = make_majority_dataset(3)
    return OracleDenoiser(ts, build_linear_schedule(3, 2))


def test_hand_computed_tilt():
    out = guided_probs(np.array([[0.6, 0.4]]), np.array([[0.5, 0.5]]), 1.0)
    assert_allclose(out, [[0.72 / 1.04, 0.32 / 1.04]], rtol=0, atol=1e-12)
    assert out[0, 0] == pytest.approx(0.6923, abs=1e-4)


def test_zero_scale_and_equal_inputs_are_identities():
    rng = np.random.default_rng(0)
    cond = rng.dirichlet(np.ones(4), size=5)
    uncond = rng.dirichlet(np.ones(4), size=5)
    assert_allclose(guided_probs(cond, uncond, 0.0), cond, rtol=0, atol=1e-12)
    for s in (0.5, 1.0, 3.0, 10.0):
        assert_allclose(guided_probs(cond, cond, s), cond, rtol=0, atol=1e-12)


def test_output_is_a_distribution_even_with_zeros():
    cond = np.array([[1.0, 0.0, 0.0], [0.2, 0.3, 0.5]])
    uncond = np.array([[0.0, 0.5, 0.5], [0.0, 0.0, 1.0]])
    for s in (0.0, 1.0, 5.0, 50.0):
        assert is_distribution(guided_probs(cond, uncond, s))


def test_argmax_sharpening():
    cond = np.array([[0.75, 0.25], [0.3, 0.7]])
    uncond = np.array([[0.5, 0.5], [0.5, 0.5]])
    previous = guided_probs(cond, uncond, 0.0)
    for s in (1.0, 3.0, 5.0):
        current = guided_probs(cond, uncond, s)
        assert current[0, 0] >= previous[0, 0]
        assert current[1, 1] >= previous[1, 1]
        previous = current
    far = guided_probs(cond, uncond, 50.0)
    assert far[0, 0] == pytest.approx(1.0, abs=1e-3)
    assert far[1, 1] == pytest.approx(1.0, abs=1e-3)


def test_shape_mismatch_is_rejected():
    with pytest.raises(ConfigurationError):
        guided_probs(np.ones((2, 2)) / 2, np.ones((3, 2)) / 2, 1.0)


def test_config_validation():
    with pytest.raises(ValidationError):
        GuidanceConfig(scale=-1.0)
    with pytest.raises(ValidationError):
        GuidanceConfig(prob_floor=0.0)
    with pytest.raises(ValidationError):
        GuidanceConfig(scale=1.0, temperature=2.0)
    with pytest.raises(ConfigurationError):
        GuidanceConfig(prob_floor=0.5).check_vocabulary(2)
    assert GuidanceConfig(null_mode="zero_shot").null_mode == NullMode.ZERO_SHOT


def test_zero_scale_returns_conditional_prediction(majority_oracle):
    grid = TokenGrid(1, 3, [1, MASK, MASK])
    cond = majority_oracle.predict(grid, 2, 1)
    assert np.array_equal(guided_predict(majority_oracle, grid, 2, 1, GuidanceConfig(scale=0.0)), cond)


def test_single_class_guidance_is_inert(pairs_oracle):
    for grid, t in ((TokenGrid.full(1, 2, MASK), 4), (TokenGrid(1, 2, [1, MASK]), 2)):
        cond = pairs_oracle.predict(grid, t, 1)
        guided = guided_predict(pairs_oracle, grid, t, 1, GuidanceConfig(scale=3.0))
        assert_allclose(guided, cond, rtol=0, atol=1e-12)


def test_guidance_pushes_toward_class(majority_oracle):
    grid = TokenGrid.full(1, 3, MASK)
    probs = [guided_predict(majority_oracle, grid, 3, 1, GuidanceConfig(scale=s))[0, 0] for s in (0.0, 1.0, 3.0)]
    assert probs[0] == pytest.approx(0.75)
    assert probs[0] < probs[1] < probs[2]


def test_null_condition_is_rejected(majority_oracle):
    with pytest.raises(ConfigurationError):
        guided_predict(majority_oracle, TokenGrid.full(1, 3, MASK), 3, NULL, GuidanceConfig(scale=1.0))


def test_zero_shot_matches_an_untrained_null_slot():
    ts = make_majority_dataset(3)
    schedule = build_linear_schedule(3, 2)
    d = fit_count_denoiser(ts, schedule, 5_000, 0.0, np.random.default_rng(1))
    grid = TokenGrid(1, 3, [2, MASK, MASK])
    zero_shot = guided_predict(d, grid, 2, 1, GuidanceConfig(scale=2.0, null_mode=NullMode.ZERO_SHOT))
    learnable = guided_predict(d, grid, 2, 1, GuidanceConfig(scale=2.0, null_mode=NullMode.LEARNABLE))
    assert_allclose(zero_shot, learnable, rtol=0, atol=1e-12)
