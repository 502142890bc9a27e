"""Adam over a named parameter dict, backed by the fused kernel step."""

from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import Tensor


class Adam:
    """Standard Adam with bias correction.

    Parameters whose ``.grad`` is ``None`` at step time are skipped, so heads
    that a training mode never touches keep their init values and collect no
    moment state. State arrays are float32 like everything else.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.t += 1
        for name, p in self.params.items():
            if p.grad is None:
                continue
            if name not in self._m:
                self._m[name] = np.zeros(p.data.size, dtype=np.float32)
                self._v[name] = np.zeros(p.data.size, dtype=np.float32)
            kernels.adam_step(
                p.data.ravel(), p.grad.ravel().astype(np.float32, copy=False),
                self._m[name], self._v[name],
                self.t, self.lr, self.beta1, self.beta2, self.eps,
            )
