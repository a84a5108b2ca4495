import io

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from diffusion.schedule import NoiseSchedule, build_linear_schedule, segment_rates
from lib.errors import ConfigurationError


def test_linear_schedule_values():
    s = build_linear_schedule(4, 2, eps_beta=0.1)
    assert_allclose(s.cum_gamma[1:], [0.25, 0.5, 0.75, 1.0], atol=1e-15)
    assert_allclose(s.cum_alpha[1:], [0.73125, 0.475, 0.23125, 0.0], atol=1e-15)
    assert_allclose(s.cum_beta[1:], [0.009375, 0.0125, 0.009375, 0.0], atol=1e-15)
    assert s.cumulative(0) == (1.0, 0.0, 0.0)


def test_rates_are_stochastic():
    s = build_linear_schedule(10, 5, eps_beta=0.3)
    for t in range(1, 11):
        alpha, beta, gamma = s.rates(t)
        assert min(alpha, beta, gamma) >= 0.0
        assert alpha + 5 * beta + gamma == pytest.approx(1.0, abs=1e-12)
        ca, cb, cg = s.cumulative(t)
        assert ca + 5 * cb + cg == pytest.approx(1.0, abs=1e-12)


def test_pure_mask_schedule_is_absorbing():
    s = build_linear_schedule(8, 3)
    assert s.is_absorbing
    assert s.ends_fully_masked
    assert np.all(s.beta == 0.0)
    assert not build_linear_schedule(8, 3, eps_beta=0.2).is_absorbing


@pytest.mark.parametrize("T, K, eps", [(0, 2, 0.0), (4, 0, 0.0), (4, 2, 1.5), (4, 2, -0.1), (4, 2, 1.0)])
def test_invalid_arguments(T, K, eps):
    with pytest.raises(ConfigurationError):
        build_linear_schedule(T, K, eps)


def test_arrays_are_read_only():
    s = build_linear_schedule(4, 2)
    with pytest.raises(ValueError):
        s.cum_gamma[1] = 0.3


def test_segment_rates_reproduce_stored_rates():
    s = build_linear_schedule(20, 4, eps_beta=0.2)
    for t in range(1, 21):
        assert segment_rates(s, t - 1, t) == pytest.approx(s.rates(t), abs=1e-15)
        assert segment_rates(s, 0, t) == pytest.approx(s.cumulative(t), abs=1e-15)


def test_segment_rates_compose():
    s = build_linear_schedule(12, 3, eps_beta=0.25)
    a1, b1, g1 = segment_rates(s, 2, 5)
    a2, b2, g2 = segment_rates(s, 5, 9)
    a, b, g = segment_rates(s, 2, 9)
    assert a == pytest.approx(a1 * a2, abs=1e-12)
    assert 1.0 - g == pytest.approx((1.0 - g1) * (1.0 - g2), abs=1e-12)
    assert a + 3 * b + g == pytest.approx(1.0, abs=1e-12)


def test_segment_rates_bounds():
    s = build_linear_schedule(4, 2)
    with pytest.raises(ConfigurationError):
        segment_rates(s, 3, 3)
    with pytest.raises(ConfigurationError):
        segment_rates(s, 0, 5)


def test_from_cumulative_validation():
    with pytest.raises(ConfigurationError):
        NoiseSchedule.from_cumulative([0.5, 0.7], [0.2, 0.3], 2)
    with pytest.raises(ConfigurationError):
        NoiseSchedule.from_cumulative([0.9, 0.8], [0.3, 0.2], 2)
    with pytest.raises(ConfigurationError):
        NoiseSchedule.from_cumulative([0.9], [0.3], 2)


def test_from_cumulative_non_absorbing_terminal():
    s = NoiseSchedule.from_cumulative([0.5, 0.0], [0.5, 0.9], 2)
    assert s.cum_beta[2] == pytest.approx(0.05)
    assert not s.ends_fully_masked


def test_fingerprint_tracks_curves():
    assert build_linear_schedule(4, 2).fingerprint() == build_linear_schedule(4, 2).fingerprint()
    assert build_linear_schedule(4, 2).fingerprint() != build_linear_schedule(4, 2, 0.1).fingerprint()
    assert build_linear_schedule(4, 2).fingerprint() != build_linear_schedule(4, 3).fingerprint()


def test_csv_layout():
    text = build_linear_schedule(4, 2, eps_beta=0.1).to_csv()
    lines = text.splitlines()
    assert lines[0] == "t,alpha,beta,gamma,cum_alpha,cum_beta,cum_gamma"
    assert len(lines) == 5
    frame = pd.read_csv(io.StringIO(text))
    assert frame["t"].tolist() == [1, 2, 3, 4]
    assert_allclose(frame["cum_alpha"], [0.73125, 0.475, 0.23125, 0.0], atol=1e-15)

    assert len(build_linear_schedule(1, 2).to_csv().splitlines()) == 2
