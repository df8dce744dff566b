import math
import random

import numpy as np
import pytest

from comod.conformal_reg import default_bin_centers
from comod.errors import ConfigError, DivergenceError, EmptyDataset, SchemaError
from comod.scorer import (
    LossConfig,
    ToyModelParams,
    bin_index,
    bin_weights,
    focal_loss,
    focal_loss_grad,
    inverse_class_weights,
    predict_toy,
    r2ccp_loss,
    r2ccp_loss_grad,
    train_toy,
    weighted_bce_grad,
    weighted_bce_loss,
    weighted_mse_grad,
    weighted_mse_loss,
)

FD_H = 1e-5
FD_REL_TOL = 1e-4


def central_diff(fn, x, h=FD_H):
    return (fn(x + h) - fn(x - h)) / (2 * h)


def rel_err(a, b):
    denom = max(abs(a), abs(b), 1e-8)
    return abs(a - b) / denom


class TestFocalLoss:
    def test_reduces_to_cross_entropy(self):
        cfg = LossConfig(focal_gamma=0.0, class_weights=(1.0, 1.0))
        assert focal_loss(0.5, 1, cfg) == pytest.approx(math.log(2), abs=1e-12)
        for p in np.linspace(0.01, 0.99, 25):
            for y in (0, 1):
                bce = -math.log(p if y == 1 else 1 - p)
                assert abs(focal_loss(float(p), y, cfg) - bce) < 1e-12

    def test_hand_value(self):
        cfg = LossConfig(focal_gamma=2.0, class_weights=(1.0, 1.0))
        assert focal_loss(0.9, 1, cfg) == pytest.approx(0.01 * -math.log(0.9), rel=1e-12)

    def test_limit_to_zero(self):
        cfg = LossConfig(focal_gamma=2.0, class_weights=(1.0, 1.0))
        assert focal_loss(1.0 - 1e-9, 1, cfg) < 1e-16

    def test_clamped_at_extremes(self):
        cfg = LossConfig(focal_gamma=0.0, class_weights=(1.0, 1.0))
        assert math.isfinite(focal_loss(0.0, 1, cfg))
        assert math.isfinite(focal_loss(1.0, 0, cfg))


class TestRegressionLosses:
    def test_mse_examples(self):
        assert weighted_mse_loss(0.3, 0.3, 2.0) == 0.0
        assert weighted_mse_loss(0.2, 0.5, 2.0) == pytest.approx(0.18)
        assert weighted_mse_loss(0.0, 1.0, 1.0) == 1.0

    def test_bce_symmetric_point(self):
        assert weighted_bce_loss(0.5, 0.5, 1.0) == pytest.approx(math.log(2), abs=1e-12)


class TestBinWeights:
    def test_inverse_frequency(self):
        weights = bin_weights([0.05] * 9 + [0.15])
        assert weights[0] == pytest.approx(10 / 18)
        assert weights[1] == pytest.approx(5.0)

    def test_uniform(self):
        values = [0.05 + 0.1 * i for i in range(10)]
        assert all(w == pytest.approx(1.0) for w in bin_weights(values).values())

    def test_single_bin(self):
        assert bin_weights([0.42, 0.44, 0.46]) == {4: pytest.approx(1.0)}

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            bin_weights([])

    def test_order_invariance(self):
        rng = random.Random(2)
        values = [rng.random() for _ in range(100)]
        shuffled = values[:]
        rng.shuffle(shuffled)
        assert bin_weights(values) == bin_weights(shuffled)

    def test_top_edge_folds_into_last_bin(self):
        assert bin_index(1.0) == 9


class TestR2ccpLoss:
    def test_hand_values(self):
        cfg = LossConfig(psi=1.0, tau=0.0)
        assert r2ccp_loss([0.25, 0.75], [0.6, 0.4], 0.25, cfg) == pytest.approx(0.2)
        cfg_t = LossConfig(psi=1.0, tau=0.1)
        entropy = -(0.6 * math.log(0.6) + 0.4 * math.log(0.4))
        assert r2ccp_loss([0.25, 0.75], [0.6, 0.4], 0.25, cfg_t) == pytest.approx(
            0.2 - 0.1 * entropy, abs=1e-12
        )

    def test_point_mass_at_value(self):
        cfg = LossConfig(psi=0.5, tau=0.0)
        centers = default_bin_centers(20)
        assert r2ccp_loss(centers, [0.0] * 4 + [1.0] + [0.0] * 15, centers[4], cfg) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(SchemaError):
            r2ccp_loss([0.25, 0.75], [1.0], 0.2, LossConfig())

    def test_minimized_by_nearest_center_point_mass(self):
        # over all single-bin point masses, the bin nearest d wins (B = 20)
        cfg = LossConfig(psi=0.5, tau=0.1)
        centers = default_bin_centers(20)
        rng = random.Random(4)
        for _ in range(25):
            d = rng.random()
            losses = []
            for b in range(20):
                probs = [0.0] * 20
                probs[b] = 1.0
                losses.append(r2ccp_loss(centers, probs, d, cfg))
            best = min(range(20), key=lambda b: losses[b])
            nearest = min(range(20), key=lambda b: abs(centers[b] - d))
            assert best == nearest


class TestGradientChecks:
    """Analytic gradients vs central finite differences, 100 random points."""

    def test_focal_gradient(self):
        rng = random.Random(10)
        for _ in range(100):
            p = rng.uniform(0.05, 0.95)
            y = rng.randint(0, 1)
            cfg = LossConfig(
                focal_gamma=rng.choice([0.0, 0.5, 1.0, 2.0, 5.0]),
                class_weights=(rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0)),
            )
            analytic = focal_loss_grad(p, y, cfg)
            numeric = central_diff(lambda q: focal_loss(q, y, cfg), p)
            assert rel_err(analytic, numeric) < FD_REL_TOL

    def test_bce_gradient(self):
        rng = random.Random(11)
        for _ in range(100):
            d_hat = rng.uniform(0.05, 0.95)
            d = rng.random()
            w = rng.uniform(0.1, 5.0)
            analytic = weighted_bce_grad(d_hat, d, w)
            numeric = central_diff(lambda q: weighted_bce_loss(q, d, w), d_hat)
            assert rel_err(analytic, numeric) < FD_REL_TOL

    def test_mse_gradient(self):
        rng = random.Random(12)
        for _ in range(100):
            d_hat = rng.random()
            d = rng.random()
            w = rng.uniform(0.1, 5.0)
            analytic = weighted_mse_grad(d_hat, d, w)
            numeric = central_diff(lambda q: weighted_mse_loss(q, d, w), d_hat)
            assert rel_err(analytic, numeric) < FD_REL_TOL

    def test_r2ccp_gradient(self):
        rng = random.Random(13)
        centers = default_bin_centers(20)
        cfg = LossConfig(psi=0.5, tau=0.1)
        for _ in range(100):
            probs = np.array([rng.uniform(0.01, 1.0) for _ in range(20)])
            probs = probs / probs.sum()
            d = rng.random()
            b = rng.randrange(20)
            analytic = r2ccp_loss_grad(centers, probs, d, cfg)[b]

            def at(q):
                perturbed = probs.copy()
                perturbed[b] = q
                return r2ccp_loss(centers, perturbed, d, cfg)

            numeric = central_diff(at, probs[b])
            assert rel_err(analytic, numeric) < FD_REL_TOL


def toy_dataset(n=120, seed=6, separable=True):
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        y = int(rng.random() < 0.5)
        base = 1.0 if y else -1.0
        x = rng.normal(base if separable else 0.0, 0.4, size=3)
        d = float(np.clip(rng.beta(2, 2), 0, 1))
        rows.append((tuple(float(v) for v in x) + (1.0,), y, d))
    return rows


class TestTrainToy:
    def test_zero_params_predict_half(self):
        params = ToyModelParams(
            shared_weights=np.zeros((4, 3)),
            class_head=np.zeros(3),
            reg_head=np.zeros(3),
            seed=0,
        )
        probs, reg = predict_toy(params, (0.3, -1.2, 4.0, 1.0))
        assert probs.p_toxic == 0.5
        assert reg.d_hat == 0.5

    def test_zero_params_rac_mean_center(self):
        params = ToyModelParams(
            shared_weights=np.zeros((4, 3)),
            class_head=np.zeros(3),
            reg_head=np.zeros((3, 20)),
            seed=0,
        )
        _, reg = predict_toy(params, (1.0, 2.0, 3.0, 4.0))
        assert reg.d_hat == pytest.approx(0.5)
        assert reg.bin_probs == pytest.approx(tuple([1 / 20] * 20))

    @pytest.mark.parametrize("reg_mode", ["BCE", "MSE", "RAC"])
    def test_training_reduces_classification_loss(self, reg_mode):
        data = toy_dataset()
        cfg = LossConfig(class_weights=inverse_class_weights([y for _, y, _ in data]))

        def class_loss(params):
            total = 0.0
            for x, y, _ in data:
                probs, _ = predict_toy(params, x)
                total += focal_loss(probs.p_toxic, y, cfg)
            return total / len(data)

        initial = train_toy(data, cfg, reg_mode=reg_mode, epochs=0, seed=3)
        trained = train_toy(data, cfg, reg_mode=reg_mode, epochs=200, seed=3)
        assert class_loss(trained) < class_loss(initial)

    def test_deterministic_given_seed(self):
        data = toy_dataset()
        a = train_toy(data, reg_mode="BCE", epochs=50, seed=21)
        b = train_toy(data, reg_mode="BCE", epochs=50, seed=21)
        assert a == b  # bitwise equality of every weight

    def test_different_seed_differs(self):
        data = toy_dataset()
        a = train_toy(data, reg_mode="BCE", epochs=5, seed=1)
        b = train_toy(data, reg_mode="BCE", epochs=5, seed=2)
        assert a != b

    def test_divergence_detected(self):
        # BCE's gradient does not saturate, so an absurd learning rate drives
        # the weights to overflow and the loss to NaN
        data = [((1e4, 1e4), 1, 0.3), ((-1e4, -1e4), 0, 0.7)] * 4
        with pytest.raises(DivergenceError), np.errstate(all="ignore"):
            train_toy(data, reg_mode="BCE", epochs=400, learning_rate=1e9, seed=0)

    def test_outputs_in_range(self):
        data = toy_dataset(seed=8)
        params = train_toy(data, reg_mode="RAC", epochs=30, seed=8)
        for x, _, _ in data[:20]:
            probs, reg = predict_toy(params, x)
            assert 0.0 <= probs.p_toxic <= 1.0
            assert 0.0 <= reg.d_hat <= 1.0
            assert all(p >= 0 for p in reg.bin_probs)

    def test_dimension_mismatch(self):
        data = toy_dataset()
        params = train_toy(data, reg_mode="BCE", epochs=1, seed=0)
        with pytest.raises(SchemaError):
            predict_toy(params, (1.0, 2.0))

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            train_toy([], reg_mode="BCE")

    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            train_toy(toy_dataset(), reg_mode="HUBER")


class TestLossConfig:
    def test_bad_bin_width(self):
        with pytest.raises(ConfigError):
            LossConfig(reg_bin_width=0.3)

    def test_defaults_match_fixed_settings(self):
        cfg = LossConfig()
        assert cfg.psi == 0.5 and cfg.tau == 0.1 and cfg.focal_gamma == 2.0
