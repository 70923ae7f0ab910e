"""Trainable predictors: a linear-form model and a small feed-forward network,
with full-batch gradient-descent training, prediction, and loss evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .data import Dataset, featurize
from .numerics import fsum, invert_spd, mean_weighted_features, second_moment, seeded_rng

__all__ = [
    "TrainingDivergedError",
    "TrainConfig",
    "LinearPredictor",
    "MLPPredictor",
    "Predictor",
    "LossSummary",
    "train_linear",
    "train_mlp",
    "predict",
    "predict_batch",
    "mse_loss",
    "mlp_gradient",
]


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for both predictor families.

    ``closed_form`` applies to the linear model only: when set, training
    solves the normal equations instead of running gradient descent.
    """

    learning_rate: float = 0.25
    epochs: int = 4000
    hidden_sizes: tuple[int, ...] = (16, 16)
    activation: str = "tanh"
    seed: int = 0
    closed_form: bool = True

    def __post_init__(self) -> None:
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class LinearPredictor:
    """Linear form over the featurized input (intercept coordinate included)."""

    weights: np.ndarray
    intercept: bool = True

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size < 1 or not np.isfinite(w).all():
            raise ValueError("weights must be a non-empty finite vector")
        object.__setattr__(self, "weights", w)

    def to_json_dict(self) -> dict:
        return {
            "kind": "linear",
            "weights": [float(v) for v in self.weights],
            "intercept": self.intercept,
        }


@dataclass(frozen=True)
class MLPPredictor:
    """Feed-forward network raw-input -> h1 -> h2 -> 1 with three weight layers.

    Consumes raw (un-intercepted) inputs; the network learns its own bias
    terms.  ``loss_history`` holds the training loss before each update plus
    the final loss, so its length is ``epochs_run + 1``.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str
    epochs_run: int
    final_loss: float
    loss_history: tuple[float, ...] = field(repr=False, default=())

    def __post_init__(self) -> None:
        shapes = [w.shape for w in self.weights]
        for (a, b), w_next in zip(shapes, shapes[1:]):
            if b != w_next[0]:
                raise ValueError("layer shapes do not chain")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise ValueError("bias shape does not match layer width")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("network parameters must be finite")

    def to_json_dict(self) -> dict:
        return {
            "kind": "mlp",
            "activation": self.activation,
            "layer_sizes": [int(self.weights[0].shape[0])]
            + [int(w.shape[1]) for w in self.weights],
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "epochs_run": self.epochs_run,
            "final_loss": self.final_loss,
        }


Predictor = Union[LinearPredictor, MLPPredictor]


@dataclass(frozen=True)
class LossSummary:
    """Per-sample squared errors and their arithmetic mean."""

    losses: np.ndarray
    mean: float

    def __post_init__(self) -> None:
        losses = np.asarray(self.losses, dtype=float).ravel()
        object.__setattr__(self, "losses", losses)
        if losses.size == 0:
            raise ValueError("losses must be non-empty")
        if (losses < 0.0).any():
            raise ValueError("squared losses cannot be negative")

    @property
    def n(self) -> int:
        return self.losses.shape[0]


# tanh and its derivative expressed through the activation output.
_ACTIVATIONS = {"tanh": (np.tanh, lambda h: 1.0 - h * h)}


def train_linear(train: Dataset, cfg: TrainConfig) -> LinearPredictor:
    """Fit the linear model on mean squared error.

    Closed-form mode solves the normal equations; gradient-descent mode runs
    ``cfg.epochs`` full-batch steps from a zero start and lands within
    numerical distance of the closed form once ``epochs * learning_rate`` is
    large enough on well-conditioned data.
    """
    if train.n < 1:
        raise ValueError("training set is empty")
    x = train.features
    y = train.labels
    if cfg.closed_form:
        w = invert_spd(second_moment(x)) @ mean_weighted_features(x, y)
        return LinearPredictor(w, train.intercept)
    n = train.n
    w = np.zeros(train.d)
    for epoch in range(cfg.epochs):
        residual = x @ w - y
        grad = (2.0 / n) * (x.T @ residual)
        w = w - cfg.learning_rate * grad
        if not np.isfinite(w).all():
            raise TrainingDivergedError(f"linear training diverged at epoch {epoch}")
    return LinearPredictor(w, train.intercept)


def _init_mlp(sizes: tuple[int, ...], seed: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    # Uniform(-0.5, 0.5) scaled by 1/sqrt(fan-in); biases start at zero.
    rng = seeded_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.uniform(-0.5, 0.5, (fan_in, fan_out)) / math.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward(weights, biases, act, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    hidden = []
    h = x
    for w, b in zip(weights[:-1], biases[:-1]):
        h = act(h @ w + b)
        hidden.append(h)
    out = (h @ weights[-1] + biases[-1]).ravel()
    return hidden, out


def _forward_backward(weights, biases, act, act_deriv, x, y):
    """Loss and gradients of the mean squared error over one batch."""
    n = x.shape[0]
    hidden, out = _forward(weights, biases, act, x)
    residual = out - y
    loss = fsum(residual * residual) / n
    g = (2.0 / n) * residual.reshape(-1, 1)
    grads_w = [np.empty(0)] * len(weights)
    grads_b = [np.empty(0)] * len(weights)
    layer_inputs = [x] + hidden
    for layer in range(len(weights) - 1, -1, -1):
        grads_w[layer] = layer_inputs[layer].T @ g
        grads_b[layer] = g.sum(axis=0)
        if layer > 0:
            g = (g @ weights[layer].T) * act_deriv(hidden[layer - 1])
    return loss, grads_w, grads_b


def train_mlp(train: Dataset, cfg: TrainConfig) -> MLPPredictor:
    """Train the network by full-batch gradient descent on mean squared error.

    Deterministic given the data, the config, and the seed.  Raises
    :class:`TrainingDivergedError` naming the epoch if the loss leaves the
    finite range.
    """
    if train.n < 1:
        raise ValueError("training set is empty")
    x = train.raw_features
    if x.shape[1] < 1:
        raise ValueError("network needs at least one raw input feature")
    y = train.labels
    act, act_deriv = _ACTIVATIONS[cfg.activation]
    sizes = (x.shape[1], *cfg.hidden_sizes, 1)
    weights, biases = _init_mlp(sizes, cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        loss, grads_w, grads_b = _forward_backward(weights, biases, act, act_deriv, x, y)
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"training loss became non-finite at epoch {epoch}")
        history.append(loss)
        for w, gw in zip(weights, grads_w):
            w -= cfg.learning_rate * gw
        for b, gb in zip(biases, grads_b):
            b -= cfg.learning_rate * gb
    _, out = _forward(weights, biases, act, x)
    final = fsum((out - y) ** 2) / train.n
    if not math.isfinite(final):
        raise TrainingDivergedError(f"training loss became non-finite at epoch {cfg.epochs}")
    history.append(final)
    return MLPPredictor(
        weights=tuple(w.copy() for w in weights),
        biases=tuple(b.copy() for b in biases),
        activation=cfg.activation,
        epochs_run=cfg.epochs,
        final_loss=final,
        loss_history=tuple(history),
    )


def predict_batch(p, raw: np.ndarray) -> np.ndarray:
    """Predictions for a matrix of raw input rows.

    Accepts the two predictor classes, or any callable mapping an (n, k) raw
    input matrix to n predictions (useful for plugging in oracle functions).
    """
    x = np.atleast_2d(np.asarray(raw, dtype=float))
    if isinstance(p, LinearPredictor):
        feats = featurize(x, p.intercept)
        if feats.shape[1] != p.weights.shape[0]:
            raise ValueError(
                f"expected raw dimension {p.weights.shape[0] - int(p.intercept)}, "
                f"got {x.shape[1]}"
            )
        return feats @ p.weights
    if isinstance(p, MLPPredictor):
        act, _ = _ACTIVATIONS[p.activation]
        if x.shape[1] != p.weights[0].shape[0]:
            raise ValueError(f"expected raw dimension {p.weights[0].shape[0]}, got {x.shape[1]}")
        _, out = _forward(p.weights, p.biases, act, x)
        return out
    if callable(p):
        out = np.asarray(p(x), dtype=float).ravel()
        if out.shape != (x.shape[0],):
            raise ValueError("callable predictor must return one value per row")
        return out
    raise TypeError(f"unsupported predictor type {type(p).__name__}")


def predict(p, raw) -> float:
    """Prediction for a single raw input vector."""
    value = predict_batch(p, np.asarray(raw, dtype=float).reshape(1, -1))
    return float(value[0])


def mse_loss(p: Predictor, data: Dataset) -> LossSummary:
    """Per-sample squared errors of ``p`` on labeled data, plus their mean."""
    if data.n < 1:
        raise ValueError("loss needs at least one labeled sample")
    preds = predict_batch(p, data.raw_features)
    losses = (preds - data.labels) ** 2
    return LossSummary(losses, fsum(losses) / data.n)


def mlp_gradient(p: MLPPredictor, batch: Dataset) -> dict[str, list[np.ndarray]]:
    """Gradient of the mean squared error w.r.t. every network parameter."""
    if batch.n < 1:
        raise ValueError("gradient needs a non-empty batch")
    act, act_deriv = _ACTIVATIONS[p.activation]
    _, grads_w, grads_b = _forward_backward(
        list(p.weights), list(p.biases), act, act_deriv, batch.raw_features, batch.labels
    )
    return {"weights": grads_w, "biases": grads_b}
