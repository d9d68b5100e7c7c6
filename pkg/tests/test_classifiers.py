import math
from dataclasses import replace

import numpy as np
import pytest

from ilrgp.classifiers import (
    GpdClassifierConfig,
    IlrClassifierConfig,
    PredictionSet,
    breakdown_experiment,
    build_gpd_pseudo,
    build_ilr_pseudo,
    derive_seed,
    fit_classifier,
    gpd_label_recovery_error,
    gpd_target_rows,
    predict_proba,
)
from ilrgp.data import gen_circle_mixture
from ilrgp.gp import predict_latent_batch
from ilrgp.optimize import OptConfig
from ilrgp.simplex import (
    SmoothingConfig,
    class_target_matrix,
    helmert_basis,
    ilr_inverse,
    separation_delta,
    sigma_bound,
)
from ilrgp.sparse import CollapsedGpModel


def ilr_cfg(lam=0.9, K=3, **kw):
    return IlrClassifierConfig(SmoothingConfig(lam, K), **kw)


class TestConfigs:
    def test_sigma_defaults_to_bound(self):
        cfg = ilr_cfg(0.9, 3)
        assert cfg.resolved_sigma() == sigma_bound(SmoothingConfig(0.9, 3))

    def test_sigma_above_bound_rejected(self):
        bound = sigma_bound(SmoothingConfig(0.9, 3))
        with pytest.raises(ValueError):
            ilr_cfg(0.9, 3, noise_sigma=bound * 1.01)
        ok = ilr_cfg(0.9, 3, noise_sigma=bound * 0.5)
        assert ok.resolved_sigma() == bound * 0.5

    def test_mode_and_backend_validation(self):
        with pytest.raises(ValueError):
            ilr_cfg(prediction_mode="mean")
        with pytest.raises(ValueError):
            ilr_cfg(backend="dense")
        with pytest.raises(ValueError):
            ilr_cfg(backend="collapsed")  # needs num_inducing
        with pytest.raises(ValueError):
            ilr_cfg(mc_samples=0)
        with pytest.raises(ValueError):
            GpdClassifierConfig(0.0, 3)


class TestIlrPseudo:
    def test_two_class_targets_symmetric(self):
        pseudo = build_ilr_pseudo([1, 2], ilr_cfg(0.9, 2))
        np.testing.assert_allclose(pseudo.Z[0], -pseudo.Z[1], atol=1e-12)

    def test_identical_labels_identical_rows(self):
        pseudo = build_ilr_pseudo([2, 2, 2], ilr_cfg(0.8, 4))
        assert np.all(pseudo.Z == pseudo.Z[0])

    def test_row_separation_is_delta(self):
        cfg = ilr_cfg(0.95, 5)
        pseudo = build_ilr_pseudo([1, 3], cfg)
        dist = np.linalg.norm(pseudo.Z[0] - pseudo.Z[1])
        assert dist == pytest.approx(separation_delta(cfg.smoothing), abs=1e-10)

    def test_noise_is_squared_sigma(self):
        cfg = ilr_cfg(0.9, 3, noise_sigma=0.25)
        pseudo = build_ilr_pseudo([1, 2, 3], cfg)
        assert pseudo.noise == 0.0625
        assert pseudo.latent_dim == 2  # K - 1 coordinates

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            build_ilr_pseudo([1, 4], ilr_cfg(0.9, 3))
        with pytest.raises(ValueError):
            build_ilr_pseudo([0, 1], ilr_cfg(0.9, 3))


class TestGpdPseudo:
    def test_unit_concentration_values(self):
        # with alpha_eps = 1 the off-class concentration is exactly 1
        Y, S2 = gpd_target_rows(3, 1.0)
        assert S2[0, 1] == pytest.approx(math.log(2), abs=1e-12)
        assert Y[0, 1] == pytest.approx(-0.5 * math.log(2), abs=1e-12)
        assert Y[0, 1] == pytest.approx(-0.34657, abs=1e-5)

    def test_lognormal_moment_match(self):
        # the matched log-normal reproduces Gamma(alpha, 1) mean and variance
        for alpha_eps in (0.1, 0.01, 1.0, 7.3):
            Y, S2 = gpd_target_rows(4, alpha_eps)
            for alpha, y, s2 in ((1 + alpha_eps, Y[0, 0], S2[0, 0]), (alpha_eps, Y[0, 1], S2[0, 1])):
                mean = math.exp(y + s2 / 2)
                var = (math.exp(s2) - 1) * math.exp(2 * y + s2)
                assert mean == pytest.approx(alpha, rel=1e-10)
                assert var == pytest.approx(alpha, rel=1e-10)

    def test_large_concentration_shrinks_noise(self):
        _, S2_big = gpd_target_rows(3, 1e4)
        assert S2_big.max() <= 1e-3

    def test_table_shapes_and_noise(self):
        cfg = GpdClassifierConfig(0.01, 3)
        pseudo = build_gpd_pseudo([1, 2, 3, 1], cfg)
        assert pseudo.Z.shape == (4, 3)  # K coordinates, not K - 1
        assert pseudo.noise.shape == (4, 3)
        assert pseudo.noise_kind == "per_coordinate"
        # hot coordinate carries the small variance
        assert pseudo.noise[0, 0] < pseudo.noise[0, 1]


@pytest.fixture(scope="module")
def toy():
    train = gen_circle_mixture(3, 90, 0.1, seed=0)
    test = gen_circle_mixture(3, 30, 0.1, seed=1)
    return train, test


class TestPredictProba:

    def test_rows_are_distributions(self, toy):
        train, test = toy
        cfg = ilr_cfg(0.9, 3, mc_samples=50)
        model = fit_classifier(train.X, train.labels, cfg, OptConfig(max_iters=30))
        pred = predict_proba(model, test.X, cfg, seed=0)
        assert np.all(pred.probs > 0)
        assert np.abs(pred.probs.sum(axis=1) - 1).max() <= 1e-9
        np.testing.assert_array_equal(pred.labels_hat, pred.probs.argmax(axis=1) + 1)

    def test_deterministic_given_seed(self, toy):
        train, test = toy
        cfg = ilr_cfg(0.9, 3, mc_samples=20)
        model = fit_classifier(train.X, train.labels, cfg, OptConfig(max_iters=20))
        p1 = predict_proba(model, test.X, cfg, seed=5)
        p2 = predict_proba(model, test.X, cfg, seed=5)
        np.testing.assert_array_equal(p1.probs, p2.probs)
        p3 = predict_proba(model, test.X, cfg, seed=6)
        assert not np.array_equal(p1.probs, p3.probs)

    def test_order_independent_per_point_streams(self, toy):
        train, test = toy
        cfg = ilr_cfg(0.9, 3, mc_samples=20)
        model = fit_classifier(train.X, train.labels, cfg, OptConfig(max_iters=20))
        full = predict_proba(model, test.X, cfg, seed=3)
        head = predict_proba(model, test.X[:5], cfg, seed=3)
        np.testing.assert_array_equal(full.probs[:5], head.probs)

    def test_small_variance_concentrates_on_link_of_mean(self, toy):
        train, _ = toy
        cfg = ilr_cfg(0.9, 3, mc_samples=4000, noise_sigma=0.05)
        model = fit_classifier(train.X, train.labels, cfg, OptConfig(max_iters=40))
        x = np.array([[1.0, 0.0]])  # a cluster center
        means, _ = predict_latent_batch(model, x)
        H = helmert_basis(3)
        direct = ilr_inverse(means[0], H)
        pred = predict_proba(model, x, cfg, seed=0)
        np.testing.assert_allclose(pred.probs[0], direct, atol=0.02)

    def test_argmax_matches_nearest_target(self, toy):
        train, test = toy
        cfg = ilr_cfg(0.9, 3, mc_samples=1)
        model = fit_classifier(train.X, train.labels, cfg, OptConfig(max_iters=40))
        means, var = predict_latent_batch(model, test.X)
        targets = class_target_matrix(cfg.smoothing)
        d2 = ((means[:, None, :] - targets[None, :, :]) ** 2).sum(axis=2)
        nearest = d2.argmin(axis=1) + 1
        # with S -> infinity the argmax follows the nearest latent target;
        # check via a high-sample prediction
        big = predict_proba(model, test.X, replace(cfg, mc_samples=500), seed=2)
        np.testing.assert_array_equal(big.labels_hat, nearest)

    def test_noisy_mode_inflates_spread(self, toy):
        train, test = toy
        cfg = ilr_cfg(0.9, 3, mc_samples=400)
        model = fit_classifier(train.X, train.labels, cfg, OptConfig(max_iters=30))
        quiet = predict_proba(model, test.X, cfg, seed=1)
        noisy = predict_proba(model, test.X, replace(cfg, prediction_mode="noisy-z"), seed=1)
        assert noisy.probs.max(axis=1).mean() < quiet.probs.max(axis=1).mean()

    def test_gpd_uses_k_coordinates(self, toy):
        train, test = toy
        cfg = GpdClassifierConfig(0.01, 3, mc_samples=30)
        model = fit_classifier(train.X, train.labels, cfg, OptConfig(max_iters=20))
        assert model.latent_dim == 3
        pred = predict_proba(model, test.X, cfg, seed=0)
        assert pred.probs.shape == (30, 3)

    def test_collapsed_backend(self, toy):
        train, test = toy
        cfg = ilr_cfg(0.9, 3, mc_samples=30, backend="collapsed", num_inducing=20, backend_seed=0)
        model = fit_classifier(train.X, train.labels, cfg, OptConfig(max_iters=20))
        assert isinstance(model, CollapsedGpModel)
        pred = predict_proba(model, test.X, cfg, seed=0)
        assert np.abs(pred.probs.sum(axis=1) - 1).max() <= 1e-9

    def test_dimension_mismatch_rejected(self, toy):
        train, test = toy
        cfg = ilr_cfg(0.9, 3, mc_samples=5)
        model = fit_classifier(train.X, train.labels, cfg, OptConfig(max_iters=5))
        with pytest.raises(ValueError):
            predict_proba(model, test.X, ilr_cfg(0.9, 4, mc_samples=5), seed=0)

    def test_prediction_set_validation(self):
        with pytest.raises(ValueError):
            PredictionSet(np.array([[0.5, 0.6]]), np.array([2]))
        with pytest.raises(ValueError):
            PredictionSet(np.array([[0.4, 0.6]]), np.array([1]))


class TestGpdLabelRecovery:
    def test_frozen_regression_values(self):
        assert gpd_label_recovery_error(3, 0.01, num_samples=100_000, seed=0) == 0.00438
        assert gpd_label_recovery_error(8, 0.1, num_samples=50_000, seed=1) == 0.17178

    def test_error_increases_with_classes(self):
        errs = [
            gpd_label_recovery_error(K, 0.1, num_samples=50_000, seed=2)
            for K in (2, 8, 64)
        ]
        assert errs[0] < errs[1] < errs[2]

    def test_error_decreases_with_smaller_concentration(self):
        errs = [
            gpd_label_recovery_error(32, a, num_samples=50_000, seed=3)
            for a in (0.1, 0.001, 0.0001)
        ]
        assert errs[0] > errs[1] > errs[2]

    def test_tiny_concentration_near_zero_error(self):
        assert gpd_label_recovery_error(4, 1e-5, num_samples=20_000, seed=4) <= 1e-3

    def test_validation(self):
        with pytest.raises(ValueError):
            gpd_label_recovery_error(1, 0.1)


class TestBreakdownSmoke:
    def test_structure_and_separable_errors(self):
        out = breakdown_experiment(
            n_train=90, n_test=90, num_repeats=2, opt_config=OptConfig(max_iters=25)
        )
        assert set(out) == {"ilr", "gpd"}
        assert set(out["ilr"]) == {"latent-f", "noisy-z"}
        assert out["ilr"]["latent-f"]["mean"] == 0.0
        assert out["gpd"]["latent-f"]["mean"] == 0.0
        assert len(out["gpd"]["noisy-z"]["errors"]) == 2

    def test_deterministic(self):
        kw = dict(n_train=60, n_test=60, num_repeats=1, opt_config=OptConfig(max_iters=10))
        assert breakdown_experiment(**kw) == breakdown_experiment(**kw)
