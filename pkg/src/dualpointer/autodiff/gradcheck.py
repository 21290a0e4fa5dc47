"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)
    coords_checked: int = 0
    tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} max_rel_error={self.max_rel_error:.3e} over {self.coords_checked} coords"


def grad_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-5,
    tol: float = 1e-4,
    max_coords: int = 200,
    seed: int = 0,
) -> GradCheckReport:
    """Compare autodiff gradients of scalar ``f()`` against central differences.

    ``f`` must be deterministic and read the parameter tensors' ``data`` each
    call.  Run it in 64-bit mode; 32-bit round-off swamps ``eps=1e-5``.
    Up to ``max_coords`` coordinates are sampled per parameter.
    """
    rng = np.random.default_rng(seed)
    for p in params.values():
        p.grad = None
    f().backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}
    report = GradCheckReport(max_rel_error=0.0, tol=tol)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        worst = 0.0
        for i in coords:
            original = flat[i]
            flat[i] = original + eps
            plus = f().item()
            flat[i] = original - eps
            minus = f().item()
            flat[i] = original
            numeric = (plus - minus) / (2 * eps)
            worst = max(worst, relative_error(float(analytic[name].reshape(-1)[i]), numeric))
        report.per_param[name] = worst
        report.coords_checked += len(coords)
        report.max_rel_error = max(report.max_rel_error, worst)
    for p in params.values():
        p.grad = None
    return report
