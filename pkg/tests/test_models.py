import dataclasses

import numpy as np
import pytest

from reslin import (
    Dataset,
    LinearPredictor,
    MLPPredictor,
    TrainConfig,
    TrainingDivergedError,
    mlp_gradient,
    mse_loss,
    predict,
    predict_batch,
    seeded_rng,
    train_linear,
    train_mlp,
)

CLOSED = TrainConfig(closed_form=True)
GD_LONG = TrainConfig(closed_form=False, learning_rate=0.4, epochs=40000)


def line_dataset(n=40, seed=0, noise=0.0):
    rng = seeded_rng(seed)
    x = rng.uniform(0.0, 1.0, n)
    y = 2.0 * x + 1.0
    if noise:
        y = y + noise * rng.standard_normal(n)
    return Dataset.from_raw(x.reshape(-1, 1), y)


def square_dataset(n=70, seed=1):
    rng = seeded_rng(seed)
    x = rng.uniform(0.0, 1.0, n)
    return Dataset.from_raw(x.reshape(-1, 1), x * x)


def zero_mlp(d_raw=1, hidden=(4, 4)):
    sizes = (d_raw, *hidden, 1)
    weights = tuple(np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:]))
    biases = tuple(np.zeros(b) for b in sizes[1:])
    return MLPPredictor(weights, biases, "tanh", 0, 0.0)


class TestTrainLinear:
    def test_interpolates_exact_line(self):
        p = train_linear(line_dataset(), CLOSED)
        np.testing.assert_allclose(p.weights, [1.0, 2.0], atol=1e-10)

    def test_single_sample_single_feature(self):
        ds = Dataset(np.array([[1.0]]), [5.0], intercept=False)
        p = train_linear(ds, CLOSED)
        assert p.weights[0] == pytest.approx(5.0, abs=1e-12)

    def test_gradient_descent_matches_closed_form(self):
        ds = square_dataset()
        w_gd = train_linear(ds, GD_LONG).weights
        w_cf = train_linear(ds, CLOSED).weights
        np.testing.assert_allclose(w_gd, w_cf, atol=1e-4)

    def test_modes_agree_on_random_problems(self):
        rng = seeded_rng(3)
        for trial in range(20):
            x = rng.uniform(0.0, 1.0, 60)
            y = rng.uniform(-1.0, 1.0) + rng.uniform(-2.0, 2.0) * x + 0.05 * rng.standard_normal(60)
            ds = Dataset.from_raw(x.reshape(-1, 1), y)
            w_gd = train_linear(ds, GD_LONG).weights
            w_cf = train_linear(ds, CLOSED).weights
            np.testing.assert_allclose(w_gd, w_cf, atol=1e-4)

    def test_divergence_reported(self):
        cfg = TrainConfig(closed_form=False, learning_rate=1e6, epochs=200)
        with pytest.raises(TrainingDivergedError):
            train_linear(line_dataset(), cfg)


class TestTrainMlp:
    def test_constant_labels_learned(self):
        rng = seeded_rng(4)
        x = rng.uniform(0.0, 1.0, 50)
        ds = Dataset.from_raw(x.reshape(-1, 1), np.full(50, 0.7))
        p = train_mlp(ds, TrainConfig(seed=2))
        preds = predict_batch(p, ds.raw_features)
        assert np.abs(preds - 0.7).max() <= 1e-3

    def test_square_fit_reaches_low_loss(self):
        p = train_mlp(square_dataset(), TrainConfig(seed=5))
        assert p.final_loss < 1e-3

    def test_loss_non_increasing(self):
        p = train_mlp(square_dataset(), TrainConfig(seed=6))
        hist = p.loss_history
        assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))

    def test_deterministic(self):
        ds = square_dataset()
        a = train_mlp(ds, TrainConfig(seed=7, epochs=200))
        b = train_mlp(ds, TrainConfig(seed=7, epochs=200))
        assert all((wa == wb).all() for wa, wb in zip(a.weights, b.weights))
        assert all((ba == bb).all() for ba, bb in zip(a.biases, b.biases))

    def test_divergence_names_epoch(self):
        cfg = TrainConfig(learning_rate=1e9, epochs=500, seed=8)
        with pytest.raises(TrainingDivergedError, match="epoch"):
            train_mlp(square_dataset(), cfg)

    def test_bounded_predictions_on_unit_interval(self):
        p = train_mlp(square_dataset(), TrainConfig(seed=9, epochs=500))
        grid = np.linspace(0.0, 1.0, 201).reshape(-1, 1)
        preds = predict_batch(p, grid)
        assert np.isfinite(preds).all()
        assert np.abs(preds).max() <= 10.0


class TestPredict:
    def test_linear_example(self):
        p = LinearPredictor(np.array([1.0, 2.0]))
        assert predict(p, [3.0]) == pytest.approx(7.0, abs=1e-15)

    def test_zero_mlp_predicts_zero(self):
        p = zero_mlp()
        grid = np.linspace(-2.0, 2.0, 11).reshape(-1, 1)
        assert (predict_batch(p, grid) == 0.0).all()

    def test_deterministic_across_calls(self):
        p = train_mlp(square_dataset(), TrainConfig(seed=10, epochs=100))
        x = [0.37]
        assert predict(p, x) == predict(p, x)

    def test_callable_oracle_supported(self):
        preds = predict_batch(lambda raw: raw[:, 0] ** 2, np.array([[2.0], [3.0]]))
        np.testing.assert_array_equal(preds, [4.0, 9.0])

    def test_dimension_mismatch(self):
        p = LinearPredictor(np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            predict(p, [1.0, 2.0])


class TestMseLoss:
    def test_perfect_predictor(self):
        ds = line_dataset()
        p = train_linear(ds, CLOSED)
        summary = mse_loss(p, ds)
        assert summary.mean == pytest.approx(0.0, abs=1e-20)

    def test_hand_arithmetic(self):
        ds = Dataset.from_raw(np.array([[0.1], [0.2]]), [1.0, 3.0])
        summary = mse_loss(zero_mlp(), ds)
        np.testing.assert_allclose(summary.losses, [1.0, 9.0])
        assert summary.mean == pytest.approx(5.0)

    def test_matches_two_pass_recomputation(self):
        ds = square_dataset()
        p = train_mlp(ds, TrainConfig(seed=11, epochs=300))
        summary = mse_loss(p, ds)
        naive = [(predict(p, row) - y) ** 2 for row, y in zip(ds.raw_features, ds.labels)]
        np.testing.assert_allclose(summary.losses, naive, atol=1e-12)
        assert summary.mean == pytest.approx(float(np.mean(naive)), abs=1e-12)

    def test_empty_rejected(self):
        ds = square_dataset()
        empty = Dataset(np.empty((0, 2)), np.empty(0), intercept=True)
        p = train_linear(ds, CLOSED)
        with pytest.raises(ValueError):
            mse_loss(p, empty)


class TestMlpGradient:
    def test_zero_residual_zero_gradient(self):
        ds = Dataset.from_raw(np.array([[0.3], [0.8]]), [0.0, 0.0])
        grads = mlp_gradient(zero_mlp(), ds)
        assert all((g == 0.0).all() for g in grads["weights"])
        assert all((g == 0.0).all() for g in grads["biases"])

    def test_duplicated_batch_same_gradient(self):
        ds = square_dataset(n=20, seed=12)
        doubled = Dataset(
            np.vstack([ds.features, ds.features]),
            np.concatenate([ds.labels, ds.labels]),
            intercept=True,
        )
        p = train_mlp(ds, TrainConfig(seed=13, epochs=50))
        g1 = mlp_gradient(p, ds)
        g2 = mlp_gradient(p, doubled)
        for a, b in zip(g1["weights"], g2["weights"]):
            np.testing.assert_allclose(a, b, atol=1e-14)

    def test_against_central_differences(self):
        # 100 random parameter points across several random networks.
        from conftest import gradient_rel_errors

        rng = seeded_rng(14)
        errors = []
        ds = square_dataset(n=12, seed=15)
        for net_seed in range(4):
            p = train_mlp(ds, TrainConfig(seed=net_seed, epochs=5, hidden_sizes=(4, 3)))
            errors.extend(gradient_rel_errors(p, ds, rng, count=25))
        assert len(errors) == 100
        assert max(errors) < 1e-4


class TestSerialization:
    def test_linear_json(self):
        p = LinearPredictor(np.array([1.0, 2.0]))
        doc = p.to_json_dict()
        assert doc["kind"] == "linear"
        assert doc["weights"] == [1.0, 2.0]

    def test_mlp_json(self):
        p = train_mlp(square_dataset(), TrainConfig(seed=16, epochs=20))
        doc = p.to_json_dict()
        assert doc["kind"] == "mlp"
        assert doc["layer_sizes"] == [1, 16, 16, 1]
        assert doc["epochs_run"] == 20
        assert doc["final_loss"] == p.final_loss


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(activation="relu6")

    def test_replace_seed(self):
        cfg = dataclasses.replace(TrainConfig(), seed=9)
        assert cfg.seed == 9
