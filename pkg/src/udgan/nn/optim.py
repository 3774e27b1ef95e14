from __future__ import annotations

import math

import numpy as np

from .params import ParamStore


def clip_grad_norm(store: ParamStore, max_norm: float) -> float:
    """Rescale all gradients in place so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for _, p in store.items()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for _, p in store.items():
            p.grad *= scale
    return total


def sgd_step(store: ParamStore, lr: float) -> None:
    """Plain gradient descent on every parameter, then zero the gradients."""
    for _, p in store.items():
        p.data -= lr * p.grad
    store.zero_grad()


class Adam:
    def __init__(self, store: ParamStore, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 clip: float = 5.0, frozen: bool = False):
        self.store = store
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip = clip
        self.frozen = frozen
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in store.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in store.items()}

    def step(self, lr: float | None = None) -> float:
        """Clip, apply one update, and zero the gradients. Returns the pre-clip norm."""
        if self.frozen:
            raise RuntimeError("optimizer is frozen; parameters must not change")
        lr = self.lr if lr is None else lr
        norm = clip_grad_norm(self.store, self.clip)
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.store.items():
            g = p.grad
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        self.store.zero_grad()
        return norm
