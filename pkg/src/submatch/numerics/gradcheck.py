"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .optim import ParamStore
from .tensor import Tensor, no_grad


@dataclass
class ParamCheck:
    name: str
    max_rel_error: float
    max_abs_error: float
    worst_index: tuple


@dataclass
class GradCheckReport:
    tolerance: float
    epsilon: float
    params: dict[str, ParamCheck] = field(default_factory=dict)

    @property
    def max_rel_error(self) -> float:
        return max((p.max_rel_error for p in self.params.values()), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def failures(self) -> list[str]:
        return [k for k, p in self.params.items() if p.max_rel_error >= self.tolerance]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(f: Callable[[], Tensor], p: Tensor, epsilon: float) -> np.ndarray:
    grad = np.zeros_like(p.data)
    flat = p.data.reshape(-1)
    out = grad.reshape(-1)
    with no_grad():
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            fp = float(f().data)
            flat[k] = orig - epsilon
            fm = float(f().data)
            flat[k] = orig
            out[k] = (fp - fm) / (2.0 * epsilon)
    return grad


def grad_check(f: Callable[[], Tensor], store: ParamStore, epsilon: float = 1e-5,
               tolerance: float = 1e-3, names: Optional[list[str]] = None) -> GradCheckReport:
    """Compare backprop gradients of the scalar ``f()`` with central differences.

    ``f`` must rebuild its computation from the current parameter values on
    every call and be deterministic.
    """
    store.zero_grad()
    loss = f()
    loss.backward()
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for k, t in store.items()}
    report = GradCheckReport(tolerance=tolerance, epsilon=epsilon)
    for name in names or store.names():
        p = store[name]
        num = numeric_gradient(f, p, epsilon)
        rel = relative_error(analytic[name], num)
        idx = np.unravel_index(int(np.argmax(rel)), rel.shape) if rel.size else ()
        report.params[name] = ParamCheck(
            name=name,
            max_rel_error=float(rel.max()) if rel.size else 0.0,
            max_abs_error=float(np.abs(analytic[name] - num).max()) if rel.size else 0.0,
            worst_index=tuple(int(i) for i in idx),
        )
    store.zero_grad()
    return report
