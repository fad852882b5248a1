"""Adam and the step-decay learning-rate schedule."""
from __future__ import annotations

import numpy as np


def lr_at(step: int, base_lr: float, decay_start: int, decay_every: int) -> float:
    """Constant until ``decay_start``, halved there and again every ``decay_every`` steps."""
    if step < decay_start:
        return base_lr
    return base_lr * 0.5 ** (1 + (step - decay_start) // decay_every)


class Adam:
    def __init__(self, beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        """In-place update of every entry of ``params`` that has a gradient."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1.0 - b1**self.t, 1.0 - b2**self.t
        for name in sorted(grads):
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            params[name] -= (lr / c1) * m / denom

    def state(self) -> dict[str, np.ndarray]:
        out = {f"m.{k}": v for k, v in self.m.items()}
        out.update({f"v.{k}": v for k, v in self.v.items()})
        out["t"] = np.array(float(self.t))
        return out
