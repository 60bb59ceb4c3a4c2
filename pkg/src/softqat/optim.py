"""Adam with bias correction, as a pure update rule plus a stateful wrapper."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def adam_step(param, grad, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update. Returns (param', m', v'); inputs are not modified.

    t is the 1-based step count after this update.
    """
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    """Holds first/second moment state per parameter tensor.

    Parameters with grad = None are left untouched (equivalent to zero
    gradient for the bias-corrected update at every step they are skipped,
    since m and v stay zero).
    """

    def __init__(self, params: list[Tensor], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            p.data, self._m[i], self._v[i] = adam_step(
                p.data,
                p.grad,
                self._m[i],
                self._v[i],
                self.t,
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
            )

    def zero_grad(self):
        for p in self.params:
            p.grad = None
