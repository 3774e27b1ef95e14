from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autograd import Tensor, no_grad

# Coordinates whose gradients are both below this magnitude are compared absolutely.
GRAD_FLOOR = 1e-6


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst: str
    checked: int

    def ok(self, rtol: float = 1e-3) -> bool:
        return self.max_rel_error < rtol


def check_gradients(loss_fn: Callable[[], Tensor], params: dict[str, Tensor], eps: float = 1e-4,
                    max_coords: int | None = None, rng: np.random.Generator | None = None) -> GradCheckResult:
    """Compare reverse-mode gradients with central differences.

    ``loss_fn`` must rebuild the graph from current parameter values each call.
    With ``max_coords`` a random subset of coordinates per tensor is probed.
    """
    for p in params.values():
        p.zero_grad()
    loss_fn().backward()
    analytic = {k: p.grad.copy() for k, p in params.items()}

    worst, worst_name, checked = 0.0, "", 0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = (rng or np.random.default_rng(0)).choice(flat.size, max_coords, replace=False)
        a_flat = analytic[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + eps
                up = loss_fn().item()
                flat[i] = orig - eps
                down = loss_fn().item()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = a_flat[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), GRAD_FLOOR)
            checked += 1
            if rel > worst:
                worst, worst_name = rel, f"{name}[{i}]"
    for p in params.values():
        p.zero_grad()
    return GradCheckResult(worst, worst_name, checked)
