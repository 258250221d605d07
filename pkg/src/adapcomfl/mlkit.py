"""Small differentiable classifiers over flat parameter vectors.

Two model kinds: multinomial logistic regression (``logreg``) and a
one-hidden-layer tanh MLP (``mlp``). Parameters are flattened layer by layer,
each layer as its weight matrix (``in x out``, row-major) followed by its
bias, so gradient index ``k`` means the same parameter for every client.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

MODEL_KINDS = ("logreg", "mlp")


@dataclass(frozen=True)
class Architecture:
    kind: str
    dims: int
    classes: int
    hidden: int = 32

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.dims < 1 or self.classes < 2:
            raise ValueError("need dims >= 1 and classes >= 2")

    def layers(self) -> list[tuple[int, int]]:
        if self.kind == "logreg":
            return [(self.dims, self.classes)]
        return [(self.dims, self.hidden), (self.hidden, self.classes)]

    @property
    def size(self) -> int:
        return sum(i * o + o for i, o in self.layers())


@dataclass(frozen=True, eq=False)
class ModelWeights:
    arch: Architecture
    w: np.ndarray

    def __post_init__(self):
        if self.w.shape != (self.arch.size,):
            raise ValueError(f"weights of shape {self.w.shape}, architecture needs ({self.arch.size},)")

    @property
    def n(self) -> int:
        return self.w.size

    def unpack(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out, offset = [], 0
        for i, o in self.arch.layers():
            W = self.w[offset : offset + i * o].reshape(i, o)
            offset += i * o
            out.append((W, self.w[offset : offset + o]))
            offset += o
        return out


def init_weights(arch: Architecture, seed: int | None = None) -> ModelWeights:
    """Zeros for logistic regression; scaled uniform weights for the MLP."""
    if arch.kind == "logreg" or seed is None:
        return ModelWeights(arch, np.zeros(arch.size))
    rng = np.random.default_rng(seed)
    parts = []
    for i, o in arch.layers():
        limit = np.sqrt(6.0 / (i + o))
        parts.append(rng.uniform(-limit, limit, size=i * o))
        parts.append(np.zeros(o))
    return ModelWeights(arch, np.concatenate(parts))


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    classes: int

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError("features must be (samples, dims) with one label per sample")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ValueError(f"labels must lie in [0, {self.classes})")

    def __len__(self):
        return self.labels.size

    @property
    def dims(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.classes)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels.astype(np.int64)).tobytes())
        return h.hexdigest()


def _softmax_xent(logits: np.ndarray, labels: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    m = labels.size
    loss = float(np.mean(logz - shifted[np.arange(m), labels]))
    probs = np.exp(shifted - logz[:, None])
    probs[np.arange(m), labels] -= 1.0
    return loss, probs / m


def loss_and_grad(weights: ModelWeights, batch: Dataset) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient, flattened like the weights."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    if batch.dims != weights.arch.dims or batch.classes != weights.arch.classes:
        raise ValueError(
            f"batch ({batch.dims} dims, {batch.classes} classes) does not fit "
            f"architecture ({weights.arch.dims} dims, {weights.arch.classes} classes)"
        )
    layers = weights.unpack()
    x = batch.features
    if weights.arch.kind == "logreg":
        (W, b), = layers
        loss, dlogits = _softmax_xent(x @ W + b, batch.labels)
        return loss, np.concatenate([(x.T @ dlogits).ravel(), dlogits.sum(axis=0)])

    (W1, b1), (W2, b2) = layers
    hidden = np.tanh(x @ W1 + b1)
    loss, dlogits = _softmax_xent(hidden @ W2 + b2, batch.labels)
    dhidden = (dlogits @ W2.T) * (1.0 - hidden**2)
    grad = np.concatenate([
        (x.T @ dhidden).ravel(), dhidden.sum(axis=0),
        (hidden.T @ dlogits).ravel(), dlogits.sum(axis=0),
    ])
    return loss, grad


def predict_logits(weights: ModelWeights, features: np.ndarray) -> np.ndarray:
    layers = weights.unpack()
    if weights.arch.kind == "logreg":
        (W, b), = layers
        return features @ W + b
    (W1, b1), (W2, b2) = layers
    return np.tanh(features @ W1 + b1) @ W2 + b2


def sgd_step(weights: ModelWeights, grad: np.ndarray, lr: float) -> ModelWeights:
    grad = np.asarray(grad, dtype=float)
    if grad.shape != weights.w.shape:
        raise ValueError(f"gradient shape {grad.shape} != weight shape {weights.w.shape}")
    return ModelWeights(weights.arch, weights.w - lr * grad)


def evaluate(weights: ModelWeights, test: Dataset) -> float:
    """Accuracy in percent. Argmax ties go to the lowest class index."""
    if len(test) == 0:
        raise ValueError("empty test set")
    pred = np.argmax(predict_logits(weights, test.features), axis=1)
    return 100.0 * float(np.mean(pred == test.labels))


def make_synthetic_dataset(seed: int, samples: int, dims: int, classes: int,
                           class_separation: float) -> Dataset:
    """Unit-variance Gaussian blobs around random unit-norm centres times ``class_separation``."""
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((classes, dims))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= class_separation
    labels = rng.permutation(np.arange(samples) % classes)
    features = centers[labels] + rng.standard_normal((samples, dims))
    return Dataset(features, labels.astype(np.int64), classes)


def train_local(weights: ModelWeights, data: Dataset, lr: float, epochs: int = 1,
                batch_size: int | None = None, rng: np.random.Generator | None = None) -> ModelWeights:
    """Plain SGD for ``epochs`` passes; full batch when ``batch_size`` is None."""
    for _ in range(epochs):
        if batch_size is None or batch_size >= len(data):
            _, g = loss_and_grad(weights, data)
            weights = sgd_step(weights, g, lr)
            continue
        order = rng.permutation(len(data)) if rng is not None else np.arange(len(data))
        for start in range(0, len(data), batch_size):
            _, g = loss_and_grad(weights, data.subset(order[start : start + batch_size]))
            weights = sgd_step(weights, g, lr)
    return weights


def numeric_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + eps
        up = fn(x)
        x[i] = orig - eps
        down = fn(x)
        x[i] = orig
        grad[i] = (up - down) / (2 * eps)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
