"""
Data models and types for Heavyfield
"""

import math
from dataclasses import dataclass, field, fields
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, NumericalError


# Requested times within this many grid cells below a grid point snap up to it,
# so that 1.0 / 0.05 counts as 20 steps rather than 19.
GRID_SNAP_TOLERANCE = 1e-9


class _ParamTensors:
    """Elementwise arithmetic shared by the parameter containers.

    Every operation returns a new container; stored arrays are never mutated,
    so trajectories may keep references to snapshots safely.
    """

    def tensors(self) -> Tuple[np.ndarray, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))

    def tensor_names(self) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(self))

    def _build(self, arrays):
        return type(self)(*arrays)

    def __add__(self, other):
        return self._build(a + b for a, b in zip(self.tensors(), other.tensors()))

    def __sub__(self, other):
        return self._build(a - b for a, b in zip(self.tensors(), other.tensors()))

    def __mul__(self, scalar: float):
        return self._build(scalar * a for a in self.tensors())

    __rmul__ = __mul__

    def __neg__(self):
        return self._build(-a for a in self.tensors())

    def copy(self):
        return self._build(a.copy() for a in self.tensors())

    def zeros_like(self):
        return self._build(np.zeros_like(a) for a in self.tensors())

    def same_shape(self, other) -> bool:
        return type(self) is type(other) and all(
            a.shape == b.shape for a, b in zip(self.tensors(), other.tensors()))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.tensors()])

    def from_flat(self, vector: np.ndarray):
        arrays, offset = [], 0
        for a in self.tensors():
            arrays.append(np.asarray(vector[offset:offset + a.size], dtype=np.float64).reshape(a.shape))
            offset += a.size
        return self._build(arrays)

    def equals(self, other) -> bool:
        """Exact, bitwise-value equality of every entry"""
        return self.same_shape(other) and all(
            np.array_equal(a, b) for a, b in zip(self.tensors(), other.tensors()))

    def first_nonfinite(self) -> Optional[Tuple[str, Tuple[int, ...]]]:
        for name, a in zip(self.tensor_names(), self.tensors()):
            bad = np.argwhere(~np.isfinite(a))
            if bad.size:
                return name, tuple(int(i) for i in bad[0])
        return None

    def check_finite(self, step: Optional[int] = None):
        """Raise NumericalError naming the first non-finite coordinate"""
        where = self.first_nonfinite()
        if where is not None:
            raise NumericalError("non-finite parameter", step=step, tensor=where[0], coordinate=where[1])


@dataclass(eq=False)
class Params2L(_ParamTensors):
    """Two-layer weights, one neuron per row: theta(j) = (w1[j], w2[j])"""
    w1: np.ndarray  # (n, D)
    w2: np.ndarray  # (n,)

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        if self.w1.ndim != 2:
            raise DimensionError(f"w1 must be an n x D matrix, got shape {self.w1.shape}")
        if self.w2.shape != (self.w1.shape[0],):
            raise DimensionError(f"w2 must have shape ({self.w1.shape[0]},), got {self.w2.shape}")

    @property
    def n(self) -> int:
        return self.w1.shape[0]

    @property
    def D(self) -> int:
        return self.w1.shape[1]

    @property
    def widths(self) -> Tuple[int]:
        return (self.n,)

    def neurons(self) -> np.ndarray:
        """Rows theta(j) = (w1(j), w2(j)) as an n x (D+1) matrix"""
        return np.concatenate([self.w1, self.w2[:, None]], axis=1)

    def subset(self, indices: Sequence[int]) -> 'Params2L':
        idx = np.asarray(indices, dtype=np.intp)
        return Params2L(self.w1[idx].copy(), self.w2[idx].copy())


@dataclass(eq=False)
class Params3L(_ParamTensors):
    """Three-layer weights w1 (n1 x D), w2 (n1 x n2), w3 (n2)"""
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.w3 = np.asarray(self.w3, dtype=np.float64)
        if self.w1.ndim != 2:
            raise DimensionError(f"w1 must be an n1 x D matrix, got shape {self.w1.shape}")
        if self.w2.ndim != 2 or self.w2.shape[0] != self.w1.shape[0]:
            raise DimensionError(f"w2 must have shape ({self.w1.shape[0]}, n2), got {self.w2.shape}")
        if self.w3.shape != (self.w2.shape[1],):
            raise DimensionError(f"w3 must have shape ({self.w2.shape[1]},), got {self.w3.shape}")

    @property
    def n1(self) -> int:
        return self.w1.shape[0]

    @property
    def n2(self) -> int:
        return self.w2.shape[1]

    @property
    def D(self) -> int:
        return self.w1.shape[1]

    @property
    def widths(self) -> Tuple[int, int]:
        return (self.n1, self.n2)

    def subset(self, first: Sequence[int], second: Sequence[int]) -> 'Params3L':
        i1 = np.asarray(first, dtype=np.intp)
        i2 = np.asarray(second, dtype=np.intp)
        return Params3L(self.w1[i1].copy(), self.w2[np.ix_(i1, i2)].copy(), self.w3[i2].copy())


# Scaled gradients share the parameter layout.
Grad2L = Params2L
Grad3L = Params3L


@dataclass(frozen=True)
class Hyper:
    """Friction gamma, step eps, regularization lam, temperature beta_inv, horizon T"""
    gamma: float
    eps: float
    lam: float = 0.0
    beta_inv: float = 0.0
    T: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if not self.gamma * self.eps < 1:
            raise ValueError(f"gamma * eps must be < 1, got {self.gamma * self.eps}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.beta_inv < 0:
            raise ValueError(f"beta_inv must be >= 0, got {self.beta_inv}")
        if self.T < 0:
            raise ValueError(f"T must be >= 0, got {self.T}")
        assert 0 < self.beta < 1

    @property
    def beta(self) -> float:
        """Momentum coefficient 1 - gamma * eps"""
        return 1.0 - self.gamma * self.eps

    @property
    def eta(self) -> float:
        """Learning rate eps^2"""
        return self.eps * self.eps

    @property
    def diffusion(self) -> float:
        """Momentum noise amplitude sqrt(2 gamma / beta)"""
        return math.sqrt(2.0 * self.gamma * self.beta_inv)

    @property
    def n_steps(self) -> int:
        return self.steps_until(self.T)

    def steps_until(self, t: float) -> int:
        """floor(t / eps), snapping values that sit on a grid point"""
        return int(math.floor(t / self.eps + GRID_SNAP_TOLERANCE))

    def grid(self) -> np.ndarray:
        return self.eps * np.arange(self.n_steps + 1, dtype=np.float64)


@dataclass
class SHBState:
    """Discrete state; the momentum is implicit as (W - W_prev) / eps"""
    W: object
    W_prev: object
    k: int = 0

    @staticmethod
    def initial(W) -> 'SHBState':
        # r(0) = 0
        return SHBState(W=W, W_prev=W, k=0)

    def momentum(self, eps: float):
        return (self.W - self.W_prev) * (1.0 / eps)


@dataclass
class PDState:
    """Continuous state (theta, r) at time t"""
    theta: object
    r: object
    t: float = 0.0

    @staticmethod
    def initial(theta) -> 'PDState':
        return PDState(theta=theta, r=theta.zeros_like(), t=0.0)


@dataclass
class SamplePool:
    """Fixed Monte Carlo sample set standing in for the population"""
    X: np.ndarray  # (M, D)
    Y: np.ndarray  # (M,)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.Y = np.atleast_1d(np.asarray(self.Y, dtype=np.float64))
        if self.X.shape[0] != self.Y.shape[0]:
            raise DimensionError(f"pool has {self.X.shape[0]} inputs but {self.Y.shape[0]} labels")

    def __len__(self) -> int:
        return self.Y.shape[0]

    @property
    def D(self) -> int:
        return self.X.shape[1]

    def subset(self, indices: Sequence[int]) -> 'SamplePool':
        idx = np.asarray(indices, dtype=np.intp)
        return SamplePool(self.X[idx], self.Y[idx])


@dataclass
class Trajectory:
    """Parameter snapshots on the k * eps grid"""
    times: np.ndarray
    snapshots: List[object]
    label: str = ''

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        if len(self.times) != len(self.snapshots):
            raise DimensionError("times and snapshots differ in length")

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def initial(self):
        return self.snapshots[0]

    @property
    def final(self):
        return self.snapshots[-1]


@dataclass(frozen=True)
class DataSpec:
    """Synthetic bounded data distribution"""
    dim: int = 10
    radius: Optional[float] = None  # None means sqrt(dim)
    label_model: str = 'teacher2l'
    label_clip: float = 1.0
    teacher_width: int = 4
    teacher_seed: int = 1234

    @property
    def K_x(self) -> float:
        return math.sqrt(self.dim) if self.radius is None else float(self.radius)

    @property
    def K_y(self) -> float:
        return float(self.label_clip)


@dataclass(frozen=True)
class InitSpec:
    """Initial law of the weights; w1 Gaussian, output layers bounded"""
    w1_std: Optional[float] = None  # None means 1/sqrt(D)
    k_init: float = 1.0
    k_init3: Optional[float] = None  # third layer bound, None means k_init
    w2_law: str = 'uniform'  # uniform | sign
    law: str = 'product'  # product | joint (two-layer only)

    def std_for(self, D: int) -> float:
        return 1.0 / math.sqrt(D) if self.w1_std is None else float(self.w1_std)

    @property
    def k_out(self) -> float:
        return self.k_init if self.k_init3 is None else float(self.k_init3)


@dataclass
class EmpiricalMeasure:
    """Uniform measure (1/n) sum_j delta_{atoms[j]}"""
    atoms: np.ndarray

    def __post_init__(self):
        self.atoms = np.atleast_2d(np.asarray(self.atoms, dtype=np.float64))
        if self.atoms.shape[0] < 1:
            raise ValueError("an empirical measure needs at least one atom")
        if not np.all(np.isfinite(self.atoms)):
            raise ValueError("atoms must be finite")

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @staticmethod
    def of_neurons(W: Params2L) -> 'EmpiricalMeasure':
        return EmpiricalMeasure(W.neurons())


@dataclass
class DistanceReport:
    """sup over the grid of the max-over-neurons distance"""
    metric: str
    times: np.ndarray
    values: np.ndarray
    location: Tuple = ()

    @property
    def sup(self) -> float:
        return float(np.max(self.values)) if len(self.values) else 0.0


@dataclass(frozen=True)
class DropoutSpec:
    """Kept neurons: `first` for two layers, (`first`, `second`) for three"""
    first: Tuple[int, ...]
    second: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, 'first', tuple(int(i) for i in self.first))
        if self.second is not None:
            object.__setattr__(self, 'second', tuple(int(i) for i in self.second))

    def validate(self, *widths: int):
        sets = [self.first] if self.second is None else [self.first, self.second]
        if len(sets) != len(widths):
            raise DimensionError(f"dropout spec has {len(sets)} index sets for {len(widths)} layers")
        for layer, (indices, n) in enumerate(zip(sets, widths), start=1):
            if not indices:
                raise ValueError(f"dropout set for layer {layer} is empty")
            if len(set(indices)) != len(indices):
                raise ValueError(f"dropout set for layer {layer} has duplicates")
            if min(indices) < 0 or max(indices) >= n:
                raise ValueError(f"dropout set for layer {layer} has indices outside [0, {n})")


@dataclass
class PathSpec:
    """Piecewise-linear path, consecutive segments share knots"""
    segments: List[Tuple[object, object]] = field(default_factory=list)

    @property
    def start(self):
        return self.segments[0][0]

    @property
    def end(self):
        return self.segments[-1][1]

    def knots(self) -> List[object]:
        return [self.segments[0][0]] + [seg[1] for seg in self.segments]

    @staticmethod
    def interpolate(a, b, t: float):
        # (1 - t) a + t b reproduces both ends exactly at t = 0 and t = 1
        return a * (1.0 - t) + b * t

    def point(self, segment: int, t: float):
        a, b = self.segments[segment]
        return self.interpolate(a, b, t)


@dataclass
class RateFit:
    """Least-squares line through (log x, log y)"""
    log_x: np.ndarray
    log_y: np.ndarray
    slope: float
    intercept: float
    r2: float

    def as_dict(self) -> dict:
        return {'slope': self.slope, 'intercept': self.intercept, 'r2': self.r2,
                'points': len(self.log_x)}
