"""Models: weight sharing, likelihoods, and the reparameterized objective."""

import math

import numpy as np
import pytest

from helpers import elbo_gradient_max_rel_error, random_elbo_config
from mrcl.model_zoo import (
    Dataset,
    HashConfig,
    ModelSpec,
    elbo_and_gradients,
    expand_hashed_weights,
    forward,
    layer_hash_mapping,
    log_likelihood,
    log_likelihood_and_grad,
)


class TestHashing:
    def test_identity_when_buckets_equal_params(self):
        # one bucket per parameter degenerates to the identity map: every
        # bucket used exactly once (checked exhaustively at small sizes)
        spec = ModelSpec((3, 4), hash_configs=(HashConfig(16, 99),))
        assert layer_hash_mapping(spec, 0) is None
        buckets = np.arange(16, dtype=float)
        (w, b), = expand_hashed_weights(spec, buckets)
        np.testing.assert_array_equal(np.concatenate([w.ravel(), b]), buckets)

    def test_single_bucket_shares_everything(self):
        spec = ModelSpec((3, 4), hash_configs=(HashConfig(1, 7),))
        (w, b), = expand_hashed_weights(spec, np.array([2.5]))
        assert np.all(w == 2.5) and np.all(b == 2.5)

    def test_mapping_deterministic(self):
        spec = ModelSpec((5, 6), hash_configs=(HashConfig(9, 1234),))
        m1 = layer_hash_mapping(spec, 0)
        m2 = layer_hash_mapping(ModelSpec((5, 6), hash_configs=(HashConfig(9, 1234),)), 0)
        np.testing.assert_array_equal(m1, m2)
        assert m1.min() >= 0 and m1.max() < 9

    def test_bucket_count_bounds_validated(self):
        with pytest.raises(ValueError):
            ModelSpec((3, 4), hash_configs=(HashConfig(17, 1),))
        with pytest.raises(ValueError):
            ModelSpec((3, 4), hash_configs=(HashConfig(0, 1),))


class TestLogLikelihood:
    def test_one_class_degenerate_is_zero(self):
        spec = ModelSpec((2, 1))
        data = Dataset(np.random.default_rng(0).normal(0, 1, (5, 2)), np.zeros(5, dtype=np.int64))
        assert log_likelihood(spec, np.zeros(spec.n_trainable), data) == 0.0

    def test_uniform_logits_symmetry(self):
        spec = ModelSpec((2, 5))
        rng = np.random.default_rng(1)
        data = Dataset(rng.normal(0, 1, (9, 2)), rng.integers(0, 5, 9))
        assert log_likelihood(spec, np.zeros(spec.n_trainable), data) == pytest.approx(
            9 * -math.log(5), rel=1e-12
        )

    def test_duplicating_dataset_doubles_exactly(self):
        spec = ModelSpec((3, 7, 4), "relu")
        rng = np.random.default_rng(2)
        w = rng.normal(0, 0.7, spec.n_trainable)
        x = rng.normal(0, 1, (13, 3))
        y = rng.integers(0, 4, 13)
        single = log_likelihood(spec, w, Dataset(x, y))
        double = log_likelihood(spec, w, Dataset(np.vstack([x, x]), np.concatenate([y, y])))
        assert double == 2.0 * single

    def test_regression_matches_formula(self):
        spec = ModelSpec((2, 1), task="regression")
        w = np.zeros(spec.n_trainable)
        x = np.array([[1.0, 2.0]])
        y = np.array([[0.7]])
        expect = -0.5 * 0.49 - 0.5 * math.log(2 * math.pi)
        assert log_likelihood(spec, w, Dataset(x, y)) == pytest.approx(expect, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        spec = ModelSpec((3, 6, 4), "tanh", "classification",
                         (None, HashConfig(10, 42)))
        w = rng.normal(0, 0.5, spec.n_trainable)
        data = Dataset(rng.normal(0, 1, (8, 3)), rng.integers(0, 4, 8))
        _, grad = log_likelihood_and_grad(spec, w, data)
        h = 1e-5
        for j in range(spec.n_trainable):
            up, dn = w.copy(), w.copy()
            up[j] += h
            dn[j] -= h
            numeric = (log_likelihood(spec, up, data) - log_likelihood(spec, dn, data)) / (2 * h)
            assert abs(grad[j] - numeric) / max(abs(numeric), 1e-6) < 1e-4

    def test_bad_class_id_rejected(self):
        spec = ModelSpec((2, 3))
        with pytest.raises(ValueError):
            log_likelihood(spec, np.zeros(spec.n_trainable), Dataset(np.zeros((1, 2)), np.array([3])))

    def test_wrong_weight_count_rejected(self):
        spec = ModelSpec((2, 3))
        with pytest.raises(ValueError):
            forward(spec, np.zeros(spec.n_trainable + 1), np.zeros((1, 2)))


class TestElbo:
    def test_zero_betas_leave_pure_likelihood(self):
        rng = np.random.default_rng(4)
        cfg = random_elbo_config(rng)
        cfg["betas"] = np.zeros_like(cfg["betas"])
        res = elbo_and_gradients(**cfg)
        assert res.objective == pytest.approx(res.scaled_log_likelihood, rel=1e-12)

    def test_all_frozen_is_deterministic_with_empty_gradients(self):
        rng = np.random.default_rng(5)
        cfg = random_elbo_config(rng)
        cfg["frozen_mask"] = np.ones_like(cfg["frozen_mask"])
        cfg["open_mask"] = np.zeros_like(cfg["open_mask"])
        cfg["noise"] = np.zeros(0)
        r1 = elbo_and_gradients(**cfg)
        r2 = elbo_and_gradients(**cfg)
        assert r1.objective == r2.objective
        assert np.all(r1.grad_q_mean == 0) and np.all(r1.grad_q_log_std == 0)
        assert np.all(r1.grad_p_log_std == 0)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            cfg = random_elbo_config(rng)
            assert elbo_gradient_max_rel_error(cfg) < 1e-4

    def test_noise_length_enforced(self):
        rng = np.random.default_rng(7)
        cfg = random_elbo_config(rng)
        cfg["noise"] = np.zeros(int((~cfg["frozen_mask"]).sum()) + 1)
        with pytest.raises(ValueError):
            elbo_and_gradients(**cfg)


class TestDataset:
    def test_row_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), np.zeros(4, dtype=np.int64))

    def test_subset_preserves_targets(self):
        d = Dataset(np.arange(10).reshape(5, 2).astype(float), np.arange(5))
        s = d.subset(np.array([0, 3]))
        np.testing.assert_array_equal(s.targets, [0, 3])
