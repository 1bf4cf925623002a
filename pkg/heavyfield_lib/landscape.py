"""
Dropout stability and connectivity of two-layer solutions
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .datagen import STREAM_DROPOUT, counter_rng, pool_risk
from .errors import DimensionError
from .models import DropoutSpec, Params2L, Params3L, PathSpec, SamplePool
from .transport import matching

logger = logging.getLogger(__name__)

PATH_SEGMENTS = 5
DEFAULT_STEPS_PER_SEGMENT = 64


def dropout_net_2L(W: Params2L, spec: DropoutSpec) -> Params2L:
    """Neurons in A; the 1/|A| normalization follows from the new width"""
    spec.validate(W.n)
    return W.subset(spec.first)


def dropout_net_3L(W: Params3L, spec: DropoutSpec) -> Params3L:
    spec.validate(W.n1, W.n2)
    return W.subset(spec.first, spec.second)


def dropout_net(W, spec: DropoutSpec):
    if isinstance(W, Params3L):
        return dropout_net_3L(W, spec)
    return dropout_net_2L(W, spec)


def kept_count(n: int, fraction: float) -> int:
    """Neurons kept when dropping `fraction` of n, at least one"""
    return max(1, n - int(round(n * fraction)))


def random_dropout_sets(widths: Sequence[int], fraction: float, count: int, seed: int) -> List[DropoutSpec]:
    """`count` uniformly random subsets per layer, without replacement"""
    if not 0 <= fraction < 1:
        raise ValueError(f"dropout fraction must be in [0, 1), got {fraction}")
    specs = []
    for i in range(count):
        rng = counter_rng(seed, STREAM_DROPOUT, i)
        sets = [tuple(sorted(int(j) for j in rng.choice(n, kept_count(n, fraction), replace=False)))
                for n in widths]
        specs.append(DropoutSpec(*sets))
    return specs


def dropout_error(W, spec: DropoutSpec, pool: SamplePool, net) -> float:
    """|R(W) - R(W_A)| on the pool"""
    return abs(pool_risk(W, pool, net) - pool_risk(dropout_net(W, spec), pool, net))


def mean_dropout_error(W, pool: SamplePool, net, fraction: float = 0.5, subsets: int = 10,
                       seed: int = 0) -> List[float]:
    """Dropout errors over random subsets of the hidden layers"""
    widths = W.widths
    return [dropout_error(W, spec, pool, net) for spec in random_dropout_sets(widths, fraction, subsets, seed)]


def _with(W: Params2L, w1=None, w2=None) -> Params2L:
    return Params2L(W.w1 if w1 is None else w1, W.w2 if w2 is None else w2)


def build_path_2L(W: Params2L, W_other: Params2L, A: Optional[Sequence[int]] = None) -> PathSpec:
    """Five-segment path from W to W_other through half-width dropout networks.

    With B the complement of A and both halves of size n/2:
      1. W -> W_A: output weights doubled on A, zeroed on B
      2. first-layer rows of B move to W_other's rows (their output weight is 0)
      3. output weight moves from W_A on A to W_other_B (doubled) on B
      4. first-layer rows of A move to W_other's rows (their output weight is 0)
      5. W_other_B -> W_other
    Outputs are linear in t on every segment. Step 2 loads W_other's B rows, so
    the endpoint equals W_other exactly; for W_other = W the barrier is then
    bounded by max(eps_D(W, A), eps_D(W, B)) under a convex loss.
    """
    if not W.same_shape(W_other):
        raise DimensionError("path endpoints must have the same shape")
    n = W.n
    if n % 2:
        raise ValueError(f"path construction needs an even width, got {n}")
    A = np.arange(n // 2) if A is None else np.asarray(sorted(A), dtype=np.intp)
    DropoutSpec(tuple(A)).validate(n)
    if len(A) != n // 2:
        raise ValueError(f"A must hold exactly half of the {n} neurons")
    in_A = np.zeros(n, dtype=bool)
    in_A[A] = True
    scale = n / len(A)

    p0 = W
    p1 = _with(W, w2=np.where(in_A, W.w2 * scale, 0.0))
    p2 = _with(p1, w1=np.where(in_A[:, None], W.w1, W_other.w1))
    p3 = _with(p2, w2=np.where(in_A, 0.0, W_other.w2 * scale))
    p4 = _with(p3, w1=W_other.w1.copy())
    p5 = W_other
    knots = [p0, p1, p2, p3, p4, p5]
    return PathSpec(segments=list(zip(knots[:-1], knots[1:])))


def linear_path(W, W_other) -> PathSpec:
    if not W.same_shape(W_other):
        raise DimensionError("path endpoints must have the same shape")
    return PathSpec(segments=[(W, W_other)])


@dataclass
class PathRisk:
    positions: np.ndarray  # segment index + t
    risks: np.ndarray
    endpoint_risks: tuple

    @property
    def eps_C(self) -> float:
        """Risk excess over the worse endpoint, floored at 0"""
        return max(0.0, float(np.max(self.risks)) - max(self.endpoint_risks))

    @property
    def max_risk(self) -> float:
        return float(np.max(self.risks))


def risk_along_path(path: PathSpec, pool: SamplePool, net, steps: int = DEFAULT_STEPS_PER_SEGMENT) -> PathRisk:
    """Pool risk at `steps` uniform points on each segment, ends included"""
    if steps < 2:
        raise ValueError(f"need at least 2 points per segment, got {steps}")
    ts = np.linspace(0.0, 1.0, steps)
    positions, risks = [], []
    for s, (a, b) in enumerate(path.segments):
        for t in ts:
            point = a if t == 0.0 else b if t == 1.0 else PathSpec.interpolate(a, b, t)
            positions.append(s + t)
            risks.append(pool_risk(point, pool, net))
    endpoints = (pool_risk(path.start, pool, net), pool_risk(path.end, pool, net))
    return PathRisk(positions=np.asarray(positions), risks=np.asarray(risks), endpoint_risks=endpoints)


def knot_gap(path: PathSpec) -> float:
    """Largest coordinate mismatch between consecutive segments"""
    gaps = [0.0]
    for (_, end), (start, _) in zip(path.segments, path.segments[1:]):
        gaps.extend(float(np.max(np.abs(a - b))) for a, b in zip(end.tensors(), start.tensors()))
    return max(gaps)


def align_neurons(W: Params2L, W_other: Params2L) -> Params2L:
    """W_other with its neurons reordered to the exact W2 matching against W"""
    perm = matching(W.neurons(), W_other.neurons(), capped=False)
    return W_other.subset(perm)
