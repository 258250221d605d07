"""Two-layer LSTM regressor with hand-written backpropagation through time.

Input is a batch of scalar sequences, shape ``(batch, steps)``. Each layer
uses the usual input/forget/output gates; the cell candidate has no bias and
the scalar head has no bias either, so an all-zero input sequence maps to an
output of exactly 0. The bandwidth predictor relies on that to be exact on
flat traces.

Parameters live in a flat float64 vector so they can be finite-difference
checked and updated with plain SGD.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class LSTMShape:
    hidden: tuple[int, ...] = (16, 8)

    def layer_sizes(self) -> list[tuple[int, int]]:
        sizes = []
        d_in = 1
        for h in self.hidden:
            sizes.append((d_in, h))
            d_in = h
        return sizes

    def slices(self) -> dict[str, tuple[slice, tuple[int, ...]]]:
        """Name -> (slice into flat vector, shape). Order is the flattening order."""
        return _layout(self.hidden)

    @property
    def size(self) -> int:
        return max(s.stop for s, _ in self.slices().values())


@lru_cache(maxsize=None)
def _layout(hidden: tuple[int, ...]) -> dict[str, tuple[slice, tuple[int, ...]]]:
    out = {}
    offset = 0

    def take(name, shape):
        nonlocal offset
        size = int(np.prod(shape))
        out[name] = (slice(offset, offset + size), shape)
        offset += size

    d_in = 1
    for li, h in enumerate(hidden):
        take(f"W{li}", (d_in, 4 * h))
        take(f"U{li}", (h, 4 * h))
        take(f"b{li}", (3 * h,))  # gates i, f, o; the candidate is unbiased
        d_in = h
    take("head", (hidden[-1],))
    return out


def init_params(shape: LSTMShape, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    flat = np.zeros(shape.size)
    for name, (sl, shp) in shape.slices().items():
        if name.startswith("b"):
            h = shp[0] // 3
            bias = np.zeros(shp)
            bias[h : 2 * h] = 1.0  # forget gate starts open
            flat[sl] = bias
        else:
            fan = shp[0]
            limit = 1.0 / np.sqrt(fan)
            flat[sl] = rng.uniform(-limit, limit, size=shp).ravel()
    return flat


def _unpack(shape: LSTMShape, flat: np.ndarray) -> dict[str, np.ndarray]:
    return {name: flat[sl].reshape(shp) for name, (sl, shp) in shape.slices().items()}


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def forward(shape: LSTMShape, flat: np.ndarray, x: np.ndarray):
    """Run the network on ``x`` of shape ``(batch, steps)``.

    Returns ``(y, cache)`` where ``y`` has shape ``(batch,)``.
    """
    p = _unpack(shape, flat)
    batch, steps = x.shape
    inputs = x[:, :, None]
    caches = []
    for li, (_, h) in enumerate(shape.layer_sizes()):
        W, U, bias = p[f"W{li}"], p[f"U{li}"], p[f"b{li}"]
        full_bias = np.concatenate([bias, np.zeros(h)])
        hs = np.zeros((batch, steps + 1, h))
        cs = np.zeros((batch, steps + 1, h))
        gates = np.zeros((batch, steps, 4 * h))
        for t in range(steps):
            z = inputs[:, t] @ W + hs[:, t] @ U + full_bias
            act = gates[:, t]
            act[:, : 3 * h] = _sigmoid(z[:, : 3 * h])
            act[:, 3 * h :] = np.tanh(z[:, 3 * h :])
            cs[:, t + 1] = act[:, h : 2 * h] * cs[:, t] + act[:, :h] * act[:, 3 * h :]
            hs[:, t + 1] = act[:, 2 * h : 3 * h] * np.tanh(cs[:, t + 1])
        caches.append((inputs, hs, cs, gates))
        inputs = hs[:, 1:]
    y = inputs[:, -1] @ p["head"]
    return y, caches


def loss_and_grad(shape: LSTMShape, flat: np.ndarray, x: np.ndarray, target: np.ndarray):
    """Mean squared error over the batch and its gradient w.r.t. the flat parameters."""
    p = _unpack(shape, flat)
    y, caches = forward(shape, flat, x)
    err = y - target
    loss = float(np.mean(err**2))
    batch = x.shape[0]
    grads = {name: np.zeros_like(v) for name, v in p.items()}

    dy = 2.0 * err / batch
    last_h = caches[-1][1][:, -1]
    grads["head"] = last_h.T @ dy
    steps = x.shape[1]
    d_out = np.zeros_like(caches[-1][1][:, 1:])
    d_out[:, -1] = dy[:, None] * p["head"][None, :]

    for li in reversed(range(len(caches))):
        inputs, hs, cs, gates = caches[li]
        W, U = p[f"W{li}"], p[f"U{li}"]
        h = U.shape[0]
        d_inputs = np.zeros_like(inputs)
        dh_next = np.zeros((batch, h))
        dc_next = np.zeros((batch, h))
        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        dz_bias = np.zeros(4 * h)
        for t in reversed(range(steps)):
            i = gates[:, t, :h]
            f = gates[:, t, h : 2 * h]
            o = gates[:, t, 2 * h : 3 * h]
            g = gates[:, t, 3 * h :]
            tc = np.tanh(cs[:, t + 1])
            dh = d_out[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc**2)
            dz = np.empty((batch, 4 * h))
            dz[:, :h] = dc * g * i * (1.0 - i)
            dz[:, h : 2 * h] = dc * cs[:, t] * f * (1.0 - f)
            dz[:, 2 * h : 3 * h] = dh * tc * o * (1.0 - o)
            dz[:, 3 * h :] = dc * i * (1.0 - g**2)
            dW += inputs[:, t].T @ dz
            dU += hs[:, t].T @ dz
            dz_bias += dz.sum(axis=0)
            dh_next = dz @ U.T
            dc_next = dc * f
            d_inputs[:, t] = dz @ W.T
        grads[f"W{li}"] = dW
        grads[f"U{li}"] = dU
        grads[f"b{li}"] = dz_bias[: 3 * h]
        d_out = d_inputs

    flat_grad = np.zeros_like(flat)
    for name, (sl, _) in shape.slices().items():
        flat_grad[sl] = grads[name].ravel()
    return loss, flat_grad
