import numpy as np
import pytest
from numpy.testing import assert_allclose

from diffusion.grid import TokenGrid, mask_token
from diffusion.schedule import build_linear_schedule
from diffusion.transition import (
    cumulative_column,
    mask_persistence,
    posterior,
    reverse_step_dist,
    reverse_step_probs,
    sample_forward,
    sample_forward_batch,
    sample_reverse_step,
    strided_posterior,
    transition_column,
    transition_matrix,
)
from lib.errors import ConfigurationError, UnreachableStateError


def _segment_matrix(schedule, t_from, t_to):
    m = np.eye(schedule.K + 1)
    for s in range(t_from + 1, t_to + 1):
        m = transition_matrix(schedule.rates(s), schedule.K) @ m
    return m


def test_transition_column():
    col = transition_column(1, (0.7, 0.05, 0.2), 2)
    assert_allclose(col, [0.75, 0.05, 0.2])
    assert_allclose(transition_column(3, (0.7, 0.05, 0.2), 2), [0.0, 0.0, 1.0])
    with pytest.raises(ConfigurationError):
        transition_column(4, (0.7, 0.05, 0.2), 2)
    with pytest.raises(ConfigurationError):
        cumulative_column(3, (0.7, 0.05, 0.2), 2)


def test_transition_matrix_is_column_stochastic():
    s = build_linear_schedule(6, 4, eps_beta=0.3)
    for t in range(1, 7):
        q = transition_matrix(s.rates(t), 4)
        assert q.shape == (5, 5)
        assert_allclose(q.sum(axis=0), np.ones(5), atol=1e-14)


def test_closed_form_matches_matrix_product():
    K, T = 16, 100
    s = build_linear_schedule(T, K, eps_beta=0.2)
    m = np.eye(K + 1)
    for t in range(1, T + 1):
        m = transition_matrix(s.rates(t), K) @ m
        for x0 in range(1, K + 1):
            assert_allclose(cumulative_column(x0, s.cumulative(t), K), m[:, x0 - 1], rtol=0, atol=1e-12)


def test_posterior_matches_bayes_rule():
    K, T = 8, 20
    s = build_linear_schedule(T, K, eps_beta=0.2)
    for t in range(1, T + 1):
        q = transition_matrix(s.rates(t), K)
        for x0 in range(1, K + 1):
            prior = cumulative_column(x0, s.cumulative(t - 1), K)
            for xt in range(1, K + 2):
                w = q[xt - 1, :] * prior
                if w.sum() <= 0.0:
                    with pytest.raises(UnreachableStateError):
                        posterior(xt, x0, t, s)
                    continue
                assert_allclose(posterior(xt, x0, t, s), w / w.sum(), rtol=0, atol=1e-12)


@pytest.mark.parametrize("stride", [2, 3])
def test_strided_posterior_marginalizes_intermediate_states(stride):
    K, T = 8, 20
    s = build_linear_schedule(T, K, eps_beta=0.2)
    for t_to in range(stride, T + 1, stride):
        t_from = t_to - stride
        seg = _segment_matrix(s, t_from, t_to)
        for x0 in range(1, K + 1):
            prior = cumulative_column(x0, s.cumulative(t_from), K)
            for xt in (1, 4, K + 1):
                w = seg[xt - 1, :] * prior
                if w.sum() <= 1e-15:
                    continue
                got = strided_posterior(xt, x0, t_to, t_from, s)
                assert_allclose(got, w / w.sum(), rtol=0, atol=1e-12)


def test_mask_persistence_is_independent_of_x0():
    K, T = 5, 10
    s = build_linear_schedule(T, K, eps_beta=0.1)
    for t in range(1, T + 1):
        expected = s.cum_gamma[t - 1] / s.cum_gamma[t]
        for x0 in range(1, K + 1):
            got = posterior(mask_token(K), x0, t, s)[K]
            assert abs(got - expected) <= 1e-12
        assert mask_persistence(t, t - 1, s) == pytest.approx(expected, abs=1e-12)
    assert mask_persistence(5, 5, s) == 1.0
    with pytest.raises(ConfigurationError):
        mask_persistence(0, 0, s)


def test_forward_marginals_match_closed_form():
    K, T, n = 4, 10, 50_000
    s = build_linear_schedule(T, K, eps_beta=0.3)
    rng = np.random.default_rng(7)
    x0 = np.full((n, 1), 2)
    for t in (1, 3, 5, 8, 10):
        noisy = sample_forward_batch(x0, np.full(n, t), s, rng)[:, 0]
        empirical = np.bincount(noisy - 1, minlength=K + 1) / n
        expected = cumulative_column(2, s.cumulative(t), K)
        assert 0.5 * np.abs(empirical - expected).sum() < 0.02


def test_sample_forward_grid():
    s = build_linear_schedule(4, 2)
    x0 = TokenGrid(1, 2, [1, 2])
    rng = np.random.default_rng(0)
    assert sample_forward(x0, 0, s, rng) == x0
    assert sample_forward(x0, 4, s, rng) == TokenGrid.full(1, 2, 3)
    with pytest.raises(ConfigurationError):
        sample_forward(TokenGrid(1, 2, [1, 3]), 1, s, rng)


def test_reverse_step_with_one_hot_prediction_is_the_posterior():
    s = build_linear_schedule(6, 3, eps_beta=0.2)
    x_t = np.array([1, 4, 2])
    probs = np.eye(3)[[0, 2, 1]]
    out = reverse_step_probs(x_t, probs, 4, 3, s)
    for i, x0 in enumerate((1, 3, 2)):
        assert_allclose(out[i], posterior(int(x_t[i]), x0, 4, s), atol=1e-12)
    assert_allclose(out.sum(axis=1), np.ones(3), atol=1e-12)


def test_reverse_step_mixes_reachable_candidates():
    s = build_linear_schedule(4, 2)
    # a revealed token under a pure-mask schedule came from itself
    out = reverse_step_dist(1, np.array([0.0, 1.0]), 2, 1, s)
    assert_allclose(out, [1.0, 0.0, 0.0])
    out = reverse_step_dist(3, np.array([0.25, 0.75]), 4, 0, s)
    assert_allclose(out, [0.25, 0.75, 0.0], atol=1e-15)


def test_reverse_step_rejects_unreachable_state():
    s = build_linear_schedule(4, 2)
    with pytest.raises(UnreachableStateError):
        reverse_step_probs(np.array([1]), np.array([[0.5, 0.5]]), 4, 3, s)
    with pytest.raises(ConfigurationError):
        reverse_step_probs(np.array([3]), np.array([[0.5, 0.5]]), 2, 2, s)


def test_sample_reverse_step_never_picks_zero_mass():
    s = build_linear_schedule(4, 2)
    rng = np.random.default_rng(3)
    x_t = TokenGrid(1, 2, [3, 3])
    probs = np.array([[1.0, 0.0], [0.0, 1.0]])
    for _ in range(200):
        out = sample_reverse_step(x_t, probs, 4, 0, s, rng)
        assert out == TokenGrid(1, 2, [1, 2])
