"""Adam and AdamW optimizers with a fused in-place update kernel."""

import numpy as np

from . import kernels
from .errors import ShapeMismatchError
from .kernels import numpy_impl

# below this size, numba call dispatch costs more than the update itself
_SMALL_PARAM = 16384


class Adam:
    """Standard Adam with bias correction; weight_decay=0 disables decay."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self._m = [None] * len(self.params)
        self._v = [None] * len(self.params)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            if p.grad.shape != p.data.shape:
                raise ShapeMismatchError(
                    f"grad shape {p.grad.shape} does not match param {p.data.shape}"
                )
            if self._m[i] is None:
                self._m[i] = np.zeros_like(p.data)
                self._v[i] = np.zeros_like(p.data)
            impl = numpy_impl if p.data.size < _SMALL_PARAM else kernels
            impl.adam_update(
                p.data,
                p.grad,
                self._m[i],
                self._v[i],
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                self.step_count,
                self.weight_decay,
            )


class AdamW(Adam):
    """Adam with decoupled weight decay applied before the update delta."""

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-2):
        super().__init__(params, lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
