"""Adam ascent on dictionaries of arrays, and positivity transforms."""
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class OptConfig:
    steps: int = 1000
    learning_rate: float = 0.001
    seed: int = 0
    batch_size: Optional[int] = None
    learn_hyperparams: bool = True
    learn_likelihood: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # learning rate decays geometrically to learning_rate * final_lr_ratio
    final_lr_ratio: float = 1.0


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.logaddexp(0.0, x)


def inv_softplus(y):
    y = np.asarray(y, dtype=np.float64)
    # log(expm1(y)) computed stably for large y
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -x))


class Adam:
    """Adam for maximisation; parameters and gradients are dicts of arrays."""

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8, total_steps=None,
                 final_lr_ratio=1.0):
        self.lr = lr
        self.total_steps = total_steps
        self.final_lr_ratio = final_lr_ratio
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {}
        self._v = {}

    def step(self, params, grads):
        self.t += 1
        out = dict(params)
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        lr = self.lr
        if self.total_steps and self.final_lr_ratio != 1.0:
            lr *= self.final_lr_ratio ** ((self.t - 1) / max(self.total_steps - 1, 1))
        for key, g in grads.items():
            g = np.asarray(g, dtype=np.float64)
            m = self._m.get(key, np.zeros_like(g))
            v = self._v.get(key, np.zeros_like(g))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self._m[key] = m
            self._v[key] = v
            out[key] = params[key] + lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return out


def adam_for(cfg: OptConfig) -> Adam:
    return Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps, cfg.steps, cfg.final_lr_ratio)


def smoothed(trace, window=50):
    """Means of consecutive non-overlapping windows of ``trace``."""
    trace = np.asarray(trace, dtype=np.float64)
    n = trace.size // window
    if n == 0:
        return trace.copy()
    return trace[: n * window].reshape(n, window).mean(axis=1)
