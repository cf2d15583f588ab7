"""Two-layer fully connected classifier, trained from scratch with NumPy.

The network is input -> ReLU hidden layer -> softmax output. Everything in
this module is a pure function: models, gradients and optimizer state are
values, and training returns a new model instead of mutating its input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .datasets import Dataset

PROB_FLOOR = 1e-12


def hidden_width(num_inputs: int, num_outputs: int, width_const: int) -> int:
    """Hidden-layer size rule: floor(sqrt(inputs + outputs)) + width_const."""
    if num_inputs < 1:
        raise ValueError(f"need at least one input feature, got {num_inputs}")
    if num_outputs < 2:
        raise ValueError(f"need at least two output classes, got {num_outputs}")
    if not 1 <= width_const <= 10:
        raise ValueError(f"width constant must be in [1, 10], got {width_const}")
    return math.isqrt(num_inputs + num_outputs) + width_const


@dataclass(frozen=True)
class LayerShape:
    """Dimensions of the classifier: inputs, hidden units, output classes."""

    num_inputs: int
    num_hidden: int
    num_outputs: int
    width_const: int

    def __post_init__(self):
        expected = hidden_width(self.num_inputs, self.num_outputs, self.width_const)
        if self.num_hidden != expected:
            raise ValueError(
                f"hidden width {self.num_hidden} inconsistent with rule "
                f"(expected {expected})"
            )

    @classmethod
    def from_dims(cls, num_inputs: int, num_outputs: int, width_const: int = 3) -> "LayerShape":
        return cls(
            num_inputs=num_inputs,
            num_hidden=hidden_width(num_inputs, num_outputs, width_const),
            num_outputs=num_outputs,
            width_const=width_const,
        )

    @property
    def param_count(self) -> int:
        m, n, k = self.num_inputs, self.num_hidden, self.num_outputs
        return n * m + n + k * n + k


@dataclass(eq=False)
class ModelParams:
    """Dense weights and biases. Arrays are treated as immutable values.

    The canonical flat layout is w1 row-major, then b1, then w2 row-major,
    then b2; ``flatten``/``unflatten`` round-trip exactly.
    """

    shape: LayerShape
    w1: np.ndarray  # (num_hidden, num_inputs)
    b1: np.ndarray  # (num_hidden,)
    w2: np.ndarray  # (num_outputs, num_hidden)
    b2: np.ndarray  # (num_outputs,)

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        m, n, k = self.shape.num_inputs, self.shape.num_hidden, self.shape.num_outputs
        dims = (self.w1.shape, self.b1.shape, self.w2.shape, self.b2.shape)
        if dims != ((n, m), (n,), (k, n), (k,)):
            raise ValueError(f"parameter arrays {dims} do not match shape {self.shape}")

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    @classmethod
    def unflatten(cls, shape: LayerShape, flat: np.ndarray) -> "ModelParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (shape.param_count,):
            raise ValueError(
                f"expected {shape.param_count} parameters, got {flat.shape}"
            )
        m, n, k = shape.num_inputs, shape.num_hidden, shape.num_outputs
        w1, b1, w2, b2 = np.split(flat, [n * m, n * m + n, n * m + n + k * n])
        return cls(shape, w1.reshape(n, m), b1, w2.reshape(k, n), b2)

    def copy(self) -> "ModelParams":
        return ModelParams(self.shape, self.w1.copy(), self.b1.copy(),
                           self.w2.copy(), self.b2.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.w1, other.w1)
                and np.array_equal(self.b1, other.b1)
                and np.array_equal(self.w2, other.w2)
                and np.array_equal(self.b2, other.b2))


@dataclass(eq=False)
class Gradients:
    """Per-parameter partial derivatives, mirroring ModelParams' layout."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])


@dataclass(frozen=True)
class TrainConfig:
    """Local-training hyperparameters (defaults follow the reference setup)."""

    optimizer: str = "adam"
    learning_rate: float = 1e-5
    batch_size: int = 16
    epochs: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    rng_seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        # epochs = 0 is the explicit empty training schedule (returns the
        # start model untouched); negative counts are rejected.
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


def init_model(shape: LayerShape, seed: int) -> ModelParams:
    """Seeded init: uniform weights bounded by sqrt(3 / fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    m, n, k = shape.num_inputs, shape.num_hidden, shape.num_outputs
    bound1 = math.sqrt(3.0 / m)
    bound2 = math.sqrt(3.0 / n)
    return ModelParams(
        shape=shape,
        w1=rng.uniform(-bound1, bound1, size=(n, m)),
        b1=np.zeros(n),
        w2=rng.uniform(-bound2, bound2, size=(k, n)),
        b2=np.zeros(k),
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def hidden_features(model: ModelParams, x: np.ndarray) -> np.ndarray:
    """ReLU activations of the hidden layer for one input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.shape.num_inputs,):
        raise ValueError(f"input shape {x.shape} does not match "
                         f"({model.shape.num_inputs},)")
    return np.maximum(model.w1 @ x + model.b1, 0.0)


def forward(model: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities for one input vector (softmax output)."""
    h = hidden_features(model, x)
    return _softmax(model.w2 @ h + model.b2)


def predict_proba(model: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch of rows, shape (n, num_outputs)."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != model.shape.num_inputs:
        raise ValueError(
            f"feature dim {features.shape[1]} does not match model "
            f"({model.shape.num_inputs})"
        )
    hidden = np.maximum(features @ model.w1.T + model.b1, 0.0)
    return _softmax(hidden @ model.w2.T + model.b2)


def loss(probs: np.ndarray, label: int) -> float:
    """Cross-entropy of one prediction: -log(probs[label]), floored at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < probs.shape[-1]:
        raise ValueError(f"label {label} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(float(probs[label]), PROB_FLOOR)))


def mean_loss(model: ModelParams, features: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of the model over a batch."""
    probs = predict_proba(model, features)
    picked = probs[np.arange(len(probs)), np.asarray(labels, dtype=np.int64)]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def backward(model: ModelParams, features: np.ndarray, labels: np.ndarray) -> Gradients:
    """Gradient of the mean cross-entropy over the batch, by backprop."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if len(features) == 0:
        raise ValueError("empty batch")
    if len(features) != len(labels):
        raise ValueError("features and labels differ in length")
    if features.shape[1] != model.shape.num_inputs:
        raise ValueError(f"feature dim {features.shape[1]} does not match model")

    batch = len(features)
    z1 = features @ model.w1.T + model.b1
    h = np.maximum(z1, 0.0)
    probs = _softmax(h @ model.w2.T + model.b2)

    # d(mean CE)/d(logits) = (softmax - onehot) / batch
    dz2 = probs
    dz2[np.arange(batch), labels] -= 1.0
    dz2 /= batch

    gw2 = dz2.T @ h
    gb2 = dz2.sum(axis=0)
    dh = dz2 @ model.w2
    dz1 = dh * (z1 > 0.0)
    gw1 = dz1.T @ features
    gb1 = dz1.sum(axis=0)
    return Gradients(gw1, gb1, gw2, gb2)


def sgd_step(model: ModelParams, grads: Gradients, learning_rate: float) -> ModelParams:
    """One plain gradient-descent step: p <- p - learning_rate * g."""
    return ModelParams(
        shape=model.shape,
        w1=model.w1 - learning_rate * grads.w1,
        b1=model.b1 - learning_rate * grads.b1,
        w2=model.w2 - learning_rate * grads.w2,
        b2=model.b2 - learning_rate * grads.b2,
    )


@dataclass(eq=False)
class AdamState:
    """Adam moment buffers over the flat parameter vector."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, param_count: int) -> "AdamState":
        return cls(np.zeros(param_count), np.zeros(param_count), 0)


def adam_step(state: AdamState, model: ModelParams, grads: Gradients,
              config: TrainConfig) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam step; returns the new model and state."""
    g = grads.flatten()
    if g.shape != state.first_moment.shape:
        raise ValueError("optimizer state does not match the model size")
    t = state.step + 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    m = b1 * state.first_moment + (1.0 - b1) * g
    v = b2 * state.second_moment + (1.0 - b2) * g * g
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    flat = model.flatten() - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
    return ModelParams.unflatten(model.shape, flat), AdamState(m, v, t)


def train_local(global_model: ModelParams, data: "Dataset",
                config: TrainConfig) -> ModelParams:
    """Train a copy of the global model on one client's data.

    Runs ``config.epochs`` epochs of seeded-shuffle mini-batch updates and
    returns the updated weights; the input model is never mutated. With
    epochs = 0 the result is an exact copy of the global model.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if data.feature_dim != global_model.shape.num_inputs:
        raise ValueError(
            f"dataset feature dim {data.feature_dim} does not match model "
            f"({global_model.shape.num_inputs})"
        )
    if len(data.classes) > global_model.shape.num_outputs:
        raise ValueError("dataset has more classes than the model has outputs")

    model = global_model.copy()
    rng = np.random.default_rng(config.rng_seed)
    adam = AdamState.zeros(model.shape.param_count) if config.optimizer == "adam" else None
    features, labels = data.features, data.labels

    for _ in range(config.epochs):
        order = rng.permutation(len(data))
        for start in range(0, len(data), config.batch_size):
            idx = order[start:start + config.batch_size]
            grads = backward(model, features[idx], labels[idx])
            if adam is None:
                model = sgd_step(model, grads, config.learning_rate)
            else:
                model, adam = adam_step(adam, model, grads, config)
    return model


__all__ = [
    "AdamState", "Gradients", "LayerShape", "ModelParams", "TrainConfig",
    "adam_step", "backward", "forward", "hidden_features", "hidden_width",
    "init_model", "loss", "mean_loss", "predict_proba", "sgd_step",
    "train_local",
]
