"""Minimal dense-network primitives on float64 numpy arrays.

Every forward helper has a matching backward helper so the package never
depends on an autodiff framework; analytic gradients are verified against
central finite differences in the test suite. Parameters live in flat
``dict[str, np.ndarray]`` containers keyed by ``group/name``.
"""
from __future__ import annotations

import numpy as np
from scipy.special import erf

SQRT2 = float(np.sqrt(2.0))
INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact (erf-based) GELU."""
    return 0.5 * x * (1.0 + erf(x / SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / SQRT2)) + x * INV_SQRT_2PI * np.exp(-0.5 * x * x)


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine layer over the last axis: x @ w + b."""
    return x @ w + b


def dense_bwd(g: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Backward of ``dense``. Returns (grad_x, grad_w, grad_b).

    Leading axes of ``x``/``g`` are flattened into the batch for the
    parameter gradients.
    """
    gx = g @ w.T
    x2 = x.reshape(-1, x.shape[-1])
    g2 = g.reshape(-1, g.shape[-1])
    gw = x2.T @ g2
    gb = g2.sum(axis=0)
    return gx, gw, gb


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max subtraction, renormalized sum)."""
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_bwd(g: np.ndarray, s: np.ndarray, axis: int = -1) -> np.ndarray:
    """Backward of softmax given its output ``s`` and upstream grad ``g``."""
    dot = np.sum(g * s, axis=axis, keepdims=True)
    return s * (g - dot)


def normal_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Gaussian init scaled by 1/sqrt(fan_in)."""
    return rng.standard_normal(shape) / np.sqrt(float(fan_in))


class AdamW:
    """Adam with decoupled weight decay over a named parameter subset.

    Decay applies only to 2-D weight matrices; biases, embedding tables
    seen as 1-D, and scalars are left undecayed.
    """

    def __init__(self, params: dict[str, np.ndarray], names: list[str],
                 lr: float, weight_decay: float = 1e-2,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.names = list(names)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(params[n]) for n in self.names}
        self.v = {n: np.zeros_like(params[n]) for n in self.names}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for n in self.names:
            g = grads.get(n)
            if g is None:
                continue
            p = self.params[n]
            m = self.m[n]
            v = self.v[n]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay and p.ndim == 2:
                update = update + self.weight_decay * p
            p -= self.lr * update
