"""Minimal hand-rolled neural net core: linear layers, ReLU MLPs, stable
activations, and the optimizers used across the framework.

Gradients are accumulated (summed) into per-layer buffers; callers scale the
upstream gradient by 1/batch themselves, which keeps weighted per-sample
objectives (PPO surrogate) exact.
"""

from __future__ import annotations

import numpy as np


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class Linear:
    """Affine layer with summed-gradient buffers."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        limit = 1.0 / np.sqrt(n_in)
        self.W = rng.uniform(-limit, limit, size=(n_in, n_out))
        self.b = np.zeros(n_out)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.W + self.b

    def backward(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        self.dW += x.T @ grad_out
        self.db += grad_out.sum(axis=0)
        return grad_out @ self.W.T

    def zero_grad(self) -> None:
        self.dW[...] = 0.0
        self.db[...] = 0.0

    def parameters(self):
        return [(self.W, self.dW), (self.b, self.db)]


class MLP:
    """Stack of Linear layers with ReLU between (none after the last)."""

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        self.layers = [Linear(sizes[i], sizes[i + 1], rng) for i in range(len(sizes) - 1)]

    def forward(self, x: np.ndarray):
        """Returns (output, cache); cache feeds backward()."""
        inputs = [x]
        pre = []
        h = x
        for i, layer in enumerate(self.layers):
            z = layer.forward(h)
            pre.append(z)
            h = np.maximum(z, 0.0) if i < len(self.layers) - 1 else z
            inputs.append(h)
        return h, (inputs, pre)

    def backward(self, cache, grad_out: np.ndarray) -> np.ndarray:
        inputs, pre = cache
        grad = grad_out
        for i in reversed(range(len(self.layers))):
            if i < len(self.layers) - 1:
                grad = grad * (pre[i] > 0.0)
            grad = self.layers[i].backward(inputs[i], grad)
        return grad

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out


class _MomentOptimizer:
    def __init__(self, params):
        # params: list of (array, grad_array); arrays are updated in place
        self.params = params
        self.state = [dict() for _ in params]
        self.t = 0


class Adam(_MomentOptimizer):
    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params)
        self.lr, self.betas, self.eps = lr, betas, eps

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.betas
        for (p, g), st in zip(self.params, self.state):
            if not st:
                st["m"] = np.zeros_like(p)
                st["v"] = np.zeros_like(p)
            m, v = st["m"], st["v"]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class AdamW(Adam):
    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.01):
        super().__init__(params, lr, betas, eps)
        self.weight_decay = weight_decay

    def step(self) -> None:
        # decoupled decay applied before the Adam step
        for p, _ in self.params:
            p -= self.lr * self.weight_decay * p
        super().step()


class RMSprop(_MomentOptimizer):
    def __init__(self, params, lr: float, alpha: float = 0.99, eps: float = 1e-8):
        super().__init__(params)
        self.lr, self.alpha, self.eps = lr, alpha, eps

    def step(self) -> None:
        for (p, g), st in zip(self.params, self.state):
            if not st:
                st["v"] = np.zeros_like(p)
            st["v"] = self.alpha * st["v"] + (1 - self.alpha) * g * g
            p -= self.lr * g / (np.sqrt(st["v"]) + self.eps)
