"""Adam with bias correction, and global-norm gradient clipping."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..model import ParameterSet


class NumericError(ArithmeticError):
    """A loss or gradient became NaN or infinite."""


def clip_grad_norm(params: ParameterSet, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``; return the norm."""
    sq = 0.0
    for t in params.values():
        if t.grad is not None:
            g = t.grad.reshape(-1)
            sq += float(np.dot(g, g))
    norm = math.sqrt(sq)
    if math.isfinite(norm) and max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for t in params.values():
            if t.grad is not None:
                t.grad *= t.grad.dtype.type(scale)
    return norm


@njit(cache=True)
def _all_finite(g) -> bool:
    for i in range(g.size):
        if not np.isfinite(g[i]):
            return False
    return True


@njit(cache=True, error_model="numpy")
def _adam_update(p, g, m, v, beta1, beta2, step_size, eps):
    # one fused pass; scalars arrive in the parameter dtype so float32 stays float32
    one = beta1 - beta1 + 1
    for i in range(p.size):
        gi = g[i]
        mi = beta1 * m[i] + (one - beta1) * gi
        vi = beta2 * v[i] + (one - beta2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= step_size * mi / (np.sqrt(vi) + eps)


class Adam:
    def __init__(self, lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ParameterSet) -> None:
        """Update every parameter holding a gradient, then clear all gradients.

        A non-finite gradient aborts the whole step before anything changes.
        """
        for name, t in params.items():
            if t.grad is not None and not _all_finite(t.grad.reshape(-1)):
                params.zero_grad()
                raise NumericError(f"non-finite gradient in parameter {name!r}")
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        # bias corrections folded into the step and epsilon:
        # lr * (m / c1) / (sqrt(v / c2) + eps) == (lr sqrt(c2) / c1) * m / (sqrt(v) + eps sqrt(c2))
        step_size = self.lr * math.sqrt(c2) / c1
        eps = self.eps * math.sqrt(c2)
        for name, t in params.items():
            if t.grad is None:
                continue
            dt = t.dtype.type
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(t.data)
                self.v[name] = np.zeros_like(t.data)
            _adam_update(t.data.reshape(-1), np.ascontiguousarray(t.grad).reshape(-1),
                         m.reshape(-1), self.v[name].reshape(-1), dt(self.beta1),
                         dt(self.beta2), dt(step_size), dt(eps))
        params.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.m:
            out[f"adam.m/{name}"] = self.m[name]
            out[f"adam.v/{name}"] = self.v[name]
        return out

    def load_state(self, step_count: int, arrays: dict[str, np.ndarray]) -> None:
        self.step_count = step_count
        self.m, self.v = {}, {}
        for key, value in arrays.items():
            kind, _, name = key.partition("/")
            if kind == "adam.m":
                self.m[name] = value
            elif kind == "adam.v":
                self.v[name] = value
