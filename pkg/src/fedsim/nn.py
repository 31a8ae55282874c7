"""Minimal dense neural-network engine.

A model is a stack of ReLU dense layers (the feature extractor) followed
by one linear dense layer (the head) feeding softmax cross-entropy. All
arithmetic is float64 and every operation is a pure function of its
inputs, so values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

__all__ = [
    "Layer",
    "Model",
    "Gradients",
    "Batch",
    "ForwardCache",
    "init_model",
    "forward",
    "loss_and_grads",
    "sgd_step",
    "accuracy",
    "n_params",
    "n_extractor_params",
]


@dataclass
class Layer:
    """One dense layer: weights (n_in, n_out) and bias (n_out,)."""

    weights: np.ndarray
    bias: np.ndarray

    def copy(self) -> "Layer":
        return Layer(self.weights.copy(), self.bias.copy())

    @property
    def n_in(self) -> int:
        return self.weights.shape[0]

    @property
    def n_out(self) -> int:
        return self.weights.shape[1]


@dataclass
class Model:
    """Feature extractor (zero or more ReLU layers) plus a linear head."""

    extractor: list[Layer]
    head: Layer

    def copy(self) -> "Model":
        return Model([layer.copy() for layer in self.extractor], self.head.copy())

    @property
    def input_dim(self) -> int:
        return self.extractor[0].n_in if self.extractor else self.head.n_in

    @property
    def n_classes(self) -> int:
        return self.head.n_out


# Gradients mirror the parameter layout exactly, so they reuse the same
# container type.
Gradients = Model


@dataclass
class Batch:
    """A batch of inputs (batch_size, dim) with integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass
class ForwardCache:
    """Activations retained by forward() for the backward pass."""

    inputs: np.ndarray
    pre_activations: list[np.ndarray]  # one per extractor layer
    activations: list[np.ndarray]      # post-ReLU, one per extractor layer

    @property
    def representation(self) -> np.ndarray:
        return self.activations[-1] if self.activations else self.inputs


def init_model(extractor_dims: list[int], n_classes: int, seed: int) -> Model:
    """Build a model with Glorot-uniform weights and zero biases.

    ``extractor_dims`` chains the extractor: [D, h1, ..., K]. A single
    entry [D] means the head sits directly on the inputs. Identical
    seeds produce bit-identical models.
    """
    if not extractor_dims or any(d < 1 for d in extractor_dims):
        raise ConfigError(f"extractor dims must be non-empty positive ints, got {extractor_dims}")
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    rng = np.random.default_rng(seed)

    def glorot(n_in: int, n_out: int) -> Layer:
        s = np.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-s, s, size=(n_in, n_out))
        return Layer(w, np.zeros(n_out))

    extractor = [glorot(a, b) for a, b in zip(extractor_dims[:-1], extractor_dims[1:])]
    head = glorot(extractor_dims[-1], n_classes)
    return Model(extractor, head)


def forward(model: Model, batch: Batch) -> tuple[np.ndarray, ForwardCache]:
    """Run the model on a batch, returning logits and cached activations."""
    x = batch.inputs
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeError(
            f"batch inputs {x.shape} incompatible with model input dim {model.input_dim}"
        )
    pre, post = [], []
    h = x
    for layer in model.extractor:
        z = h @ layer.weights + layer.bias
        pre.append(z)
        h = np.maximum(z, 0.0)
        post.append(h)
    logits = h @ model.head.weights + model.head.bias
    return logits, ForwardCache(x, pre, post)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(
    model: Model,
    batch: Batch,
    *,
    freeze_extractor: bool = False,
    freeze_head: bool = False,
) -> tuple[float, Gradients]:
    """Mean softmax cross-entropy and its analytic gradients.

    Gradients of frozen parts are exact zeros; the loss value itself does
    not depend on what is frozen.
    """
    if len(batch) == 0:
        raise ValueError("cannot compute loss on an empty batch")
    labels = np.asarray(batch.labels)
    if labels.shape[0] != batch.inputs.shape[0]:
        raise ShapeError("inputs and labels disagree on batch size")
    if labels.min() < 0 or labels.max() >= model.n_classes:
        raise ValueError(f"labels must lie in [0, {model.n_classes})")

    logits, cache = forward(model, batch)
    n = len(batch)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(n), labels].mean())

    probs = np.exp(log_probs)
    dlogits = probs
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n

    rep = cache.representation
    if freeze_head:
        head_grad = Layer(np.zeros_like(model.head.weights), np.zeros_like(model.head.bias))
    else:
        head_grad = Layer(rep.T @ dlogits, dlogits.sum(axis=0))

    extractor_grads = [
        Layer(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in model.extractor
    ]
    if not freeze_extractor and model.extractor:
        dh = dlogits @ model.head.weights.T
        for idx in range(len(model.extractor) - 1, -1, -1):
            dz = dh * (cache.pre_activations[idx] > 0)
            below = cache.activations[idx - 1] if idx > 0 else cache.inputs
            extractor_grads[idx] = Layer(below.T @ dz, dz.sum(axis=0))
            if idx > 0:
                dh = dz @ model.extractor[idx].weights.T
    return loss, Gradients(extractor_grads, head_grad)


def sgd_step(model: Model, grads: Gradients, lr: float) -> Model:
    """One gradient-descent step: p' = p - lr * g, element-wise."""
    if len(grads.extractor) != len(model.extractor):
        raise ShapeError("gradient layer count differs from model")

    def step(p: Layer, g: Layer) -> Layer:
        if p.weights.shape != g.weights.shape or p.bias.shape != g.bias.shape:
            raise ShapeError(f"gradient shape {g.weights.shape} != param shape {p.weights.shape}")
        return Layer(p.weights - lr * g.weights, p.bias - lr * g.bias)

    return Model(
        [step(p, g) for p, g in zip(model.extractor, grads.extractor)],
        step(model.head, grads.head),
    )


def accuracy(model: Model, data: Batch) -> float:
    """Fraction of samples whose argmax logit hits the label.

    Argmax ties break toward the lowest class index.
    """
    if len(data) == 0:
        raise ValueError("cannot compute accuracy on an empty dataset")
    logits, _ = forward(model, data)
    predicted = logits.argmax(axis=1)
    return float((predicted == np.asarray(data.labels)).mean())


def n_params(model: Model) -> int:
    """Total number of scalar parameters."""
    total = model.head.weights.size + model.head.bias.size
    for layer in model.extractor:
        total += layer.weights.size + layer.bias.size
    return int(total)


def n_extractor_params(model: Model) -> int:
    """Number of scalar parameters in the extractor alone."""
    return int(sum(l.weights.size + l.bias.size for l in model.extractor))
