import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from diffusion.grid import TokenGrid
from diffusion.schedule import build_linear_schedule
from diffusion.transition import sample_forward_batch, transition_matrix
from denoising.denoiser import CountDenoiser, OracleDenoiser, exact_bayes_predict, fit_count_denoiser, predict
from denoising.templates import NULL, TemplateSet
from lib.errors import ConfigurationError, OffManifoldError
from toybench.datasets import make_template_dataset

A, B, MASK = 1, 2, 3


class TestTemplateSet:
    def test_weights_are_normalized(self):
        ts = TemplateSet.from_grids(2, 1, 2, [[A, A], [B, B]], weights=[3.0, 1.0])
        assert_allclose(ts.weights, [0.75, 0.25])
        assert ts.classes == 1

    def test_rejects_duplicates_and_masks(self):
        with pytest.raises(ConfigurationError):
            TemplateSet.from_grids(2, 1, 2, [[A, A], [A, A]])
        with pytest.raises(ConfigurationError):
            TemplateSet.from_grids(2, 1, 2, [[A, MASK]])
        with pytest.raises(ConfigurationError):
            TemplateSet.from_grids(2, 1, 2, [[A, A]], weights=[0.0])

    def test_marginal_and_prior(self, pairs):
        assert_allclose(pairs.marginal(), [[0.5, 0.5], [0.5, 0.5]])
        assert pairs.index_of(TokenGrid(1, 2, [A, B])) is None
        assert pairs.index_of(TokenGrid(1, 2, [B, B])) == 1
        with pytest.raises(ConfigurationError):
            pairs.prior(2)

    def test_file_round_trip(self, tmp_path):
        ts = TemplateSet.from_grids(3, 1, 2, [[1, 2], [3, 3]], labels=[1, 2], weights=[1.0, 3.0])
        path = tmp_path / "templates.json"
        ts.save(path)
        data = json.loads(path.read_text())
        assert data["templates"][1] == {"tokens": [3, 3], "class": 2, "weight": 0.75}
        loaded = TemplateSet.load(path)
        assert loaded.to_dict() == ts.to_dict()
        with pytest.raises(ConfigurationError):
            TemplateSet.load(tmp_path / "missing.json")


class TestOracle:
    def test_full_mask_prediction_is_the_marginal(self, pairs_oracle):
        probs = pairs_oracle.predict(TokenGrid.full(1, 2, MASK), 4, 1)
        assert_allclose(probs, [[0.5, 0.5], [0.5, 0.5]])

    def test_revealed_token_determines_the_rest(self, pairs_oracle):
        probs = pairs_oracle.predict(TokenGrid(1, 2, [A, MASK]), 2, 1)
        assert_allclose(probs[1], [1.0, 0.0])
        assert_allclose(probs[0], [1.0, 0.0])

    def test_off_manifold_modes(self, pairs, pairs_schedule):
        state = TokenGrid(1, 2, [A, B])
        with pytest.raises(OffManifoldError):
            OracleDenoiser(pairs, pairs_schedule).predict(state, 1, 1)
        nearest = OracleDenoiser(pairs, pairs_schedule, off_manifold="nearest")
        assert_allclose(nearest.predict(state, 1, 1), [[0.5, 0.5], [0.5, 0.5]])
        on_manifold = TokenGrid(1, 2, [B, MASK])
        assert_allclose(nearest.predict(on_manifold, 2, NULL),
                        OracleDenoiser(pairs, pairs_schedule).predict(on_manifold, 2, NULL))

    def test_rejects_bad_queries(self, pairs_oracle):
        grid = TokenGrid.full(1, 2, MASK)
        with pytest.raises(ConfigurationError):
            pairs_oracle.predict(grid, 0, 1)
        with pytest.raises(ConfigurationError):
            pairs_oracle.predict(grid, 5, 1)
        with pytest.raises(ConfigurationError):
            pairs_oracle.predict(grid, 4, 2)
        with pytest.raises(ConfigurationError):
            pairs_oracle.predict(TokenGrid.full(2, 1, MASK), 4, 1)
        with pytest.raises(ConfigurationError):
            OracleDenoiser(make_template_dataset(3, 1, 2, 2), build_linear_schedule(4, 2))

    def test_null_prediction_is_class_posterior_mixture(self):
        ts = make_template_dataset(3, 2, 2, 6, n_classes=2, seed=5)
        schedule = build_linear_schedule(6, 3, eps_beta=0.1)
        oracle = OracleDenoiser(ts, schedule)
        rng = np.random.default_rng(11)
        for _ in range(100):
            m = rng.integers(len(ts))
            t = int(rng.integers(1, 7))
            tokens = sample_forward_batch(ts.tokens[m][None, :], np.array([t]), schedule, rng)[0]
            grid = TokenGrid(2, 2, tokens)
            post = oracle.class_posterior(grid, t)
            mixture = sum(post[y - 1] * oracle.predict(grid, t, y) for y in (1, 2) if post[y - 1] > 0)
            assert_allclose(oracle.predict(grid, t, NULL), mixture, rtol=0, atol=1e-12)

    def test_exact_bayes_predict_matches_oracle(self, pairs, pairs_schedule, pairs_oracle):
        grid = TokenGrid(1, 2, [MASK, B])
        assert_allclose(exact_bayes_predict(pairs, grid, 3, 1, pairs_schedule),
                        predict(pairs_oracle, grid, 3, 1))


class TestCountDenoiser:
    def test_fit_recovers_marginals(self, pairs, pairs_schedule):
        d = fit_count_denoiser(pairs, pairs_schedule, 20_000, 0.1, np.random.default_rng(0))
        full = d.predict(TokenGrid.full(1, 2, MASK), 4, 1)
        assert_allclose(full, 0.5, atol=0.05)
        partial = d.predict(TokenGrid(1, 2, [A, MASK]), 2, 1)
        assert partial[0, 0] > 0.99
        assert_allclose(partial[1], [0.5, 0.5], atol=0.05)
        assert np.all(full > 0)

    def test_drop_frac_extremes(self, pairs, pairs_schedule):
        grid = TokenGrid.full(1, 2, MASK)
        all_dropped = fit_count_denoiser(pairs, pairs_schedule, 2_000, 1.0, np.random.default_rng(0))
        assert np.all(all_dropped.counts[:, 1:] == 1.0)
        assert_allclose(all_dropped.predict(grid, 4, 1), 0.5)

        never_dropped = fit_count_denoiser(pairs, pairs_schedule, 2_000, 0.0, np.random.default_rng(0))
        assert_allclose(never_dropped.predict(grid, 2, NULL), never_dropped.untrained_null(grid))

    def test_save_load_and_determinism(self, tmp_path, pairs, pairs_schedule):
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        fit_count_denoiser(pairs, pairs_schedule, 5_000, 0.1, np.random.default_rng(42)).save(first)
        fit_count_denoiser(pairs, pairs_schedule, 5_000, 0.1, np.random.default_rng(42)).save(second)
        assert first.read_bytes() == second.read_bytes()

        header = json.loads(first.read_text())
        assert header["drop_frac"] == 0.1
        assert header["schedule_hash"] == pairs_schedule.fingerprint()

        loaded = CountDenoiser.load(first, pairs_schedule)
        grid = TokenGrid(1, 2, [B, MASK])
        original = CountDenoiser.from_dict(header, pairs_schedule)
        assert_allclose(loaded.predict(grid, 3, 1), original.predict(grid, 3, 1))
        with pytest.raises(ConfigurationError):
            CountDenoiser.load(first, build_linear_schedule(5, 2))

    def test_fit_validation(self, pairs, pairs_schedule):
        rng = np.random.default_rng(0)
        with pytest.raises(ConfigurationError):
            fit_count_denoiser(pairs, pairs_schedule, 0, 0.1, rng)
        with pytest.raises(ConfigurationError):
            fit_count_denoiser(pairs, pairs_schedule, 10, 1.5, rng)

    def test_converges_to_pooled_posterior(self):
        ts = make_template_dataset(3, 2, 2, 6, seed=0)
        schedule = build_linear_schedule(4, 3, eps_beta=0.1)
        freq = np.bincount(ts.tokens.ravel() - 1, minlength=3) / ts.tokens.size

        def mean_tv(d):
            gaps = []
            for t in range(1, 5):
                q = transition_matrix(schedule.cumulative(t), 3)
                for v in range(1, 5):
                    exact = freq * q[v - 1, :3]
                    exact /= exact.sum()
                    row = d.predict(TokenGrid.full(2, 2, v), t, 1)[0]
                    gaps.append(0.5 * np.abs(row - exact).sum())
            return np.mean(gaps)

        small = [mean_tv(fit_count_denoiser(ts, schedule, 1_000, 0.1, np.random.default_rng(s)))
                 for s in range(5)]
        large = [mean_tv(fit_count_denoiser(ts, schedule, 100_000, 0.1, np.random.default_rng(s)))
                 for s in range(5)]
        assert np.mean(large) < 0.015
        assert np.mean(large) * 3 < np.mean(small)


class TestRowsAreDistributions:
    @pytest.mark.parametrize("kind", ["oracle", "count"])
    def test_random_states(self, kind):
        ts = make_template_dataset(3, 2, 3, 10, n_classes=2, seed=1)
        schedule = build_linear_schedule(5, 3, eps_beta=0.1)
        if kind == "oracle":
            d = OracleDenoiser(ts, schedule, off_manifold="nearest")
        else:
            d = fit_count_denoiser(ts, schedule, 5_000, 0.1, np.random.default_rng(0))
        rng = np.random.default_rng(7)
        for _ in range(1000):
            grid = TokenGrid(2, 3, rng.integers(1, 5, size=6))
            t = int(rng.integers(1, 6))
            cond = int(rng.integers(0, 3))
            probs = d.predict(grid, t, cond)
            assert probs.shape == (6, 3)
            assert np.all(probs >= 0)
            assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
