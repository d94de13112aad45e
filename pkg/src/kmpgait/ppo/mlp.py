"""Fully connected networks with hand-written forward and reverse passes."""

from __future__ import annotations

import numpy as np

_ACTIVATIONS = ("relu", "tanh", "linear")


class Mlp:
    """Dense network ``in -> hidden... -> out``.

    ``weights[k]`` has shape (fan_in, fan_out) so a batch ``X`` of shape
    (n, fan_in) maps through ``X @ W + b``.
    """

    def __init__(self, weights, biases, activations):
        if not (len(weights) == len(biases) == len(activations)):
            raise ValueError("weights, biases and activations must have equal length")
        for act in activations:
            if act not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.activations = tuple(activations)

    @classmethod
    def init(cls, sizes, activations, rng: np.random.Generator) -> "Mlp":
        """Glorot-uniform weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, activations)

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, params) -> None:
        params = list(params)
        self.weights = [np.array(p, dtype=float) for p in params[0::2]]
        self.biases = [np.array(p, dtype=float) for p in params[1::2]]

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activations)

    def forward(self, x, return_cache: bool = False):
        h = np.atleast_2d(np.asarray(x, dtype=float))
        cache = [h]
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = h @ w + b
            if act == "relu":
                h = np.maximum(z, 0.0)
            elif act == "tanh":
                h = np.tanh(z)
            else:
                h = z
            cache.append(h)
        return (h, cache) if return_cache else h

    def backward(self, cache, grad_out) -> list[np.ndarray]:
        """Gradients w.r.t. ``params()`` given dLoss/d(network output)."""
        g = np.asarray(grad_out, dtype=float)
        grads: list[np.ndarray] = []
        for k in reversed(range(len(self.weights))):
            out = cache[k + 1]
            act = self.activations[k]
            if act == "relu":
                g = g * (out > 0.0)
            elif act == "tanh":
                g = g * (1.0 - out * out)
            h_in = cache[k]
            grads.append(g.sum(axis=0))
            grads.append(h_in.T @ g)
            if k:
                g = g @ self.weights[k].T
        grads.reverse()
        return grads
