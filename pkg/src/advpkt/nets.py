"""Minimal feed-forward network core: ReLU layers, backprop, Adam.

Shared by the neural packet classifiers and the Q-network. Written
against plain numpy so training runs are bit-reproducible from a seed
and the analytic gradients can be checked against finite differences.
"""

from __future__ import annotations

import numpy as np


def kaiming_normal(rng: np.random.Generator, fan_in: int, shape: tuple,
                   dtype) -> np.ndarray:
    """He initialization: N(0, sqrt(2/fan_in)); pairs with ReLU."""
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class FeedForward:
    """Fully-connected network, ReLU hidden activations, linear output."""

    def __init__(self, sizes: list[int], rng: np.random.Generator | None = None,
                 dtype=np.float32):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = list(sizes)
        self.dtype = dtype
        rng = rng or np.random.default_rng(0)
        self.weights = [kaiming_normal(rng, a, (a, b), dtype)
                        for a, b in zip(sizes, sizes[1:])]
        self.biases = [np.zeros(b, dtype=dtype) for b in sizes[1:]]
        self._cache: list[np.ndarray] | None = None

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        """Batch forward pass; ``cache=True`` retains activations for backward."""
        h = np.asarray(x, dtype=self.dtype)
        if h.ndim == 1:
            h = h[None, :]
        acts = [h]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < self.n_layers - 1:
                h = np.maximum(h, 0)
            acts.append(h)
        self._cache = acts if cache else None
        return h

    def backward(self, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients for the last cached forward pass.

        Returns [dW0, db0, dW1, db1, ...] matching ``parameters()``.
        """
        if self._cache is None:
            raise RuntimeError("forward(cache=True) must precede backward()")
        acts = self._cache
        g = grad_out.astype(self.dtype)
        per_layer = []
        for i in range(self.n_layers - 1, -1, -1):
            per_layer.append((acts[i].T @ g, g.sum(axis=0)))
            if i > 0:
                g = g @ self.weights[i].T
                g = np.where(acts[i] > 0, g, 0)
        out: list[np.ndarray] = []
        for dw, db in reversed(per_layer):
            out.extend((dw, db))
        return out

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def set_parameters(self, params: list[np.ndarray]) -> None:
        own = self.parameters()
        if len(own) != len(params):
            raise ValueError("parameter count mismatch")
        for dst, src in zip(own, params):
            dst[...] = src.astype(self.dtype)

    def copy_from(self, other: "FeedForward") -> None:
        self.set_parameters(other.parameters())

    def clone(self) -> "FeedForward":
        twin = FeedForward(self.sizes, np.random.default_rng(0), self.dtype)
        twin.copy_from(self)
        return twin


class Adam:
    """Adaptive-moment estimation over a fixed parameter list (in place)."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1 - self.beta1 ** self.t
        b2c = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g.astype(p.dtype)
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def bce_with_logits(logits: np.ndarray, targets: np.ndarray
                    ) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on raw logits; returns (loss, dloss/dlogits).

    Uses the overflow-safe max(z,0) - z*y + log(1+exp(-|z|)) form.
    """
    z = logits.astype(np.float64).ravel()
    y = targets.astype(np.float64).ravel()
    loss = np.mean(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z))))
    grad = ((_sigmoid(z) - y) / z.size).reshape(logits.shape)
    return float(loss), grad


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def mse_selected(q_values: np.ndarray, actions: np.ndarray,
                 targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error on the Q-values of the taken actions.

    ``q_values`` is (B, A); the gradient is dense over the full output so
    it can feed ``FeedForward.backward`` directly.
    """
    idx = np.arange(q_values.shape[0])
    chosen = q_values[idx, actions].astype(np.float64)
    diff = chosen - targets.astype(np.float64)
    loss = float(np.mean(diff ** 2))
    grad = np.zeros_like(q_values, dtype=np.float64)
    grad[idx, actions] = 2.0 * diff / q_values.shape[0]
    return loss, grad
