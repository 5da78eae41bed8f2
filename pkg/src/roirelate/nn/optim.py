"""AdamW with decoupled weight decay.

Trainable parameter values are repointed into one contiguous buffer at
construction so each update runs a handful of vectorized passes instead
of per-parameter loops. Parameter objects keep working normally: their
.data arrays become views into the flat buffer.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter


class AdamW:
    """Adam with bias correction; weight decay applied directly to values.

    Update per step t:
        p   <- p * (1 - lr * weight_decay)
        m   <- b1*m + (1-b1)*g,   v <- b2*v + (1-b2)*g^2
        p   <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    """

    def __init__(
        self,
        params: dict[str, Parameter],
        lr: float = 1e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.05,
    ):
        if lr < 0:
            raise ValueError(f"invalid learning rate {lr}")
        if not (0 <= betas[0] < 1 and 0 <= betas[1] < 1):
            raise ValueError(f"invalid betas {betas}")
        self.params = dict(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0

        trainable = [p for p in self.params.values() if p.trainable]
        total = sum(p.size for p in trainable)
        flat = np.empty(total)
        self._views: list[tuple[Parameter, slice]] = []
        offset = 0
        for p in trainable:
            sl = slice(offset, offset + p.size)
            flat[sl] = p.data.ravel()
            p.data = flat[sl].reshape(p.data.shape)
            self._views.append((p, sl))
            offset += p.size
        self._flat = flat
        self._grad = np.zeros(total)
        self._m = np.zeros(total)
        self._v = np.zeros(total)
        self._scratch = np.empty(total)

    def zero_grad(self):
        for p in self.params.values():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            else:
                p.grad.fill(0.0)

    def step(self):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        # Folded bias-corrected update:
        # lr * (m/c1) / (sqrt(v/c2) + eps) == step_size * m / (sqrt(v) + eps')
        step_size = self.lr * np.sqrt(c2) / c1
        eps_hat = self.eps * np.sqrt(c2)

        g = self._grad
        for p, sl in self._views:
            g[sl] = p.grad.ravel()
        if self.weight_decay:
            self._flat *= 1.0 - self.lr * self.weight_decay
        m, v, s = self._m, self._v, self._scratch
        m *= b1
        np.multiply(g, 1.0 - b1, out=s)
        m += s
        v *= b2
        np.multiply(g, g, out=s)
        s *= 1.0 - b2
        v += s
        np.sqrt(v, out=s)
        s += eps_hat
        np.divide(m, s, out=s)
        s *= step_size
        self._flat -= s
