from __future__ import annotations

import numpy as np


class Adam:
    """Adam over a dict of numpy parameters, updated in place.

    ``weight_decay`` adds ``wd * param`` to the gradient (L2 form), which is
    what the classic Adam formulation does.
    """

    def __init__(self, params: dict, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        self.step_count += 1
        c1 = 1.0 - self.b1 ** self.step_count
        c2 = 1.0 - self.b2 ** self.step_count
        for name in sorted(self.params):
            p = self.params[name]
            g = grads.get(name)
            if g is None:
                continue
            if self.weight_decay:
                g = g + self.weight_decay * p
            m, v = self.m[name], self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


class SGD:
    """Plain gradient descent; used by the gradient-check and smoke harnesses."""

    def __init__(self, params: dict, lr: float = 1e-2):
        self.params = params
        self.lr = lr

    def step(self, grads: dict) -> None:
        for name in sorted(self.params):
            if name in grads:
                self.params[name] -= (self.lr * grads[name]).astype(self.params[name].dtype)
