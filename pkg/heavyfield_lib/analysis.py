"""
Rate fits, bound envelopes and training sanity probes
"""

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.stats import linregress

from .models import RateFit

MIN_FIT_POINTS = 3


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> RateFit:
    """Least squares on (log2 x, log2 y); the slope is the empirical exponent.

    The intercept is log2 of the prefactor c in y = c x^slope.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D sequences of equal length")
    if len(x) < MIN_FIT_POINTS:
        raise ValueError(f"a log-log fit needs at least {MIN_FIT_POINTS} points, got {len(x)}")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ValueError("log-log fits need finite positive values")
    log_x, log_y = np.log2(x), np.log2(y)
    if np.all(log_y == log_y[0]):
        return RateFit(log_x=log_x, log_y=log_y, slope=0.0, intercept=float(log_y[0]), r2=1.0)
    fit = linregress(log_x, log_y)
    return RateFit(log_x=log_x, log_y=log_y, slope=float(fit.slope), intercept=float(fit.intercept),
                   r2=min(1.0, float(fit.rvalue) ** 2))


def pachpatte_envelope(u0: float, gamma: float, Kc: float, t: Union[float, np.ndarray]):
    """u0 (1 + exp(((gamma^2 + Kc) / gamma) t))"""
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    if Kc < 0:
        raise ValueError(f"Kc must be >= 0, got {Kc}")
    if u0 < 0:
        raise ValueError(f"u0 must be >= 0, got {u0}")
    value = u0 * (1.0 + np.exp((gamma * gamma + Kc) / gamma * np.asarray(t, dtype=np.float64)))
    return float(value) if np.ndim(value) == 0 else value


@dataclass
class RiskProbe:
    initial: float
    final: float

    @property
    def decreased(self) -> bool:
        return self.final < self.initial

    @property
    def relative_change(self) -> float:
        return (self.final - self.initial) / self.initial if self.initial else 0.0


def risk_decrease_probe(risks: Sequence[float]) -> RiskProbe:
    """Whether training lowered the pool risk between the first and last snapshot"""
    if len(risks) == 0:
        raise ValueError("risk curve is empty")
    return RiskProbe(initial=float(risks[0]), final=float(risks[-1]))
