"""
Finite-difference check of the scaled gradients
"""

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .models import Params2L, Params3L

FD_STEP = 1e-5
ABS_FLOOR = 1e-8


def scaling_factors(W) -> Dict[str, float]:
    """Per-tensor factor between scaled and raw gradients"""
    if isinstance(W, Params2L):
        return {'w1': float(W.n), 'w2': float(W.n)}
    if isinstance(W, Params3L):
        return {'w1': float(W.n1), 'w2': float(W.n1 * W.n2), 'w3': float(W.n2)}
    raise TypeError(f"unsupported parameter type {type(W).__name__}")


def sample_loss(x, y, W, net) -> float:
    return float(net.loss.value(y, net.forward(x, W)))


def raw_gradient_fd(x, y, W, net, h: float = FD_STEP):
    """Central differences of R(y, f(x; W)) in every coordinate"""
    theta = W.flat()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        down = theta.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (sample_loss(x, y, W.from_flat(up), net) - sample_loss(x, y, W.from_flat(down), net)) / (2.0 * h)
    return W.from_flat(grad)


@dataclass
class LayerCheck:
    name: str
    factor: float
    max_abs_error: float
    worst_index: tuple
    passed: bool


@dataclass
class GradCheckReport:
    layers: List[LayerCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(layer.passed for layer in self.layers)

    def print_report(self):
        for layer in self.layers:
            icon = "✅" if layer.passed else "❌"
            print(f"{icon} {layer.name}: factor {layer.factor:g}, "
                  f"worst error {layer.max_abs_error:.3e} at {layer.worst_index}")


def check_scaled_gradient(x, y, W, net, rtol: float = 1e-5, h: float = FD_STEP) -> GradCheckReport:
    """Compare net.grad at one sample against factor * finite differences.

    An entry passes when |analytic - numeric| <= rtol * |numeric| + 1e-8.
    """
    analytic = net.grad(np.asarray(x, dtype=np.float64)[None, :], [y], W)
    raw = raw_gradient_fd(x, y, W, net, h=h)
    factors = scaling_factors(W)
    report = GradCheckReport()
    for name, a, r in zip(W.tensor_names(), analytic.tensors(), raw.tensors()):
        numeric = factors[name] * r
        err = np.abs(a - numeric)
        allowed = rtol * np.abs(numeric) + ABS_FLOOR
        worst = np.unravel_index(int(np.argmax(err - allowed)), err.shape)
        report.layers.append(LayerCheck(
            name=name,
            factor=factors[name],
            max_abs_error=float(np.max(err)),
            worst_index=tuple(int(i) for i in worst),
            passed=bool(np.all(err <= allowed)),
        ))
    return report
