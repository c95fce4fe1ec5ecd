"""Adam with optional global-norm gradient clipping."""

import numpy as np

from .tensor import GraphError


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, clip_norm=1.0):
        self.params = list(params)
        self.lr = float(lr)
        self.b1, self.b2 = betas
        self.eps = float(eps)
        self.clip_norm = clip_norm
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        # parameters outside the loss's graph (grad None) are left untouched
        live = [(i, p, p.grad) for i, p in enumerate(self.params)
                if p.grad is not None]
        if not live:
            raise GraphError("no parameter has a gradient; run backward first")
        grads = [g for _, _, g in live]

        if self.clip_norm is not None:
            total = np.sqrt(
                sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads)
            )
            if total > self.clip_norm:
                scale = self.clip_norm / (total + 1e-12)
                grads = [g * scale for g in grads]

        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for (i, p, _), g in zip(live, grads):
            m, v = self.m[i], self.v[i]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * np.square(g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= np.asarray(self.lr * update, dtype=p.data.dtype)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
