"""Adam optimizer with the frozen-parameter guard, plus a finite-difference
gradient checker used as the independent oracle for every layer and model."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .params import FrozenParamsError, ParamSet
from .tensor import Tensor


class Adam:
    """Standard Adam with bias correction.

    Construction and every step refuse a frozen ParamSet: gradients may flow
    through frozen tensors during backward, but their values must never move.
    """

    def __init__(self, params: ParamSet, lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        if params.frozen:
            raise FrozenParamsError("optimizer constructed on a frozen ParamSet")
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self._v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def step(self) -> None:
        if self.params.frozen:
            raise FrozenParamsError("update attempted on a frozen ParamSet")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            if p.grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad * p.grad
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def grad_check(f: Callable[[Sequence[Tensor]], Tensor], point: Sequence[Tensor],
               eps: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` maps the tensors in ``point`` to a scalar Tensor.  Relative error per
    coordinate is |g_ad - g_fd| / max(1, |g_fd|); the max over all coordinates
    of all inputs is returned.  Inputs must avoid hinge kinks for the finite
    differences to be meaningful.
    """
    point = list(point)
    for t in point:
        t.requires_grad = True
        t.zero_grad()
    out = f(point)
    out.backward()

    worst = 0.0
    for t in point:
        g_ad = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        g_fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f(point).data)
            flat[i] = orig - eps
            lo = float(f(point).data)
            flat[i] = orig
            g_fd[i] = (hi - lo) / (2 * eps)
        g_fd = g_fd.reshape(t.data.shape)
        rel = np.abs(g_ad - g_fd) / np.maximum(1.0, np.abs(g_fd))
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst
