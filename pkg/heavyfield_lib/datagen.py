"""
Synthetic bounded data, weight initializers and pool risk

All randomness comes from counter-based Philox generators keyed by
(seed, stream) with the draw index in the counter, so any draw can be
reproduced in any process without replaying the ones before it.
"""

import logging
import math
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.special import ndtr

from .models import DataSpec, InitSpec, Params2L, Params3L, SamplePool
from .network import Activation, forward2, forward3

logger = logging.getLogger(__name__)

LABEL_MODELS = ('teacher2l', 'teacher3l', 'sign-linear')

# Stream tags, one per independent source of randomness
STREAM_DATA = 1
STREAM_INIT = 2
STREAM_NOISE = 3
STREAM_TEACHER = 4
STREAM_POOL = 5
STREAM_DROPOUT = 6
STREAM_EMBED = 7

MASK64 = (1 << 64) - 1

# Inputs land on the sphere of radius K_x * (1 - 1e-12), inside the ball under any
# summation order of the norm.
RADIUS_SHRINK = 1.0 - 1e-12

TEACHER_OUTPUT_SCALE = 3.0


def counter_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Generator for draw `index` of `stream` under `seed`"""
    key = (int(seed) & MASK64) | ((int(stream) & MASK64) << 64)
    counter = (int(index) & ((1 << 128) - 1)) << 128
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


@lru_cache(maxsize=32)
def teacher_params(spec: DataSpec):
    """Fixed label network for the teacher label models"""
    rng = counter_rng(spec.teacher_seed, STREAM_TEACHER, 0)
    std = 1.0 / math.sqrt(spec.dim)
    w = spec.teacher_width
    if spec.label_model == 'teacher2l':
        return Params2L(rng.standard_normal((w, spec.dim)) * std,
                        rng.uniform(-TEACHER_OUTPUT_SCALE, TEACHER_OUTPUT_SCALE, w))
    if spec.label_model == 'teacher3l':
        return Params3L(rng.standard_normal((w, spec.dim)) * std,
                        rng.uniform(-TEACHER_OUTPUT_SCALE, TEACHER_OUTPUT_SCALE, (w, w)),
                        rng.uniform(-TEACHER_OUTPUT_SCALE, TEACHER_OUTPUT_SCALE, w))
    if spec.label_model == 'sign-linear':
        v = rng.standard_normal(spec.dim)
        return v / np.linalg.norm(v)
    raise ValueError(f"unknown label model '{spec.label_model}' (expected one of {', '.join(LABEL_MODELS)})")


def labels(spec: DataSpec, X: np.ndarray) -> np.ndarray:
    """Clipped labels for a batch of inputs"""
    teacher = teacher_params(spec)
    tanh = Activation('tanh')
    if spec.label_model == 'teacher2l':
        raw = forward2(X, teacher, tanh)
    elif spec.label_model == 'teacher3l':
        raw = forward3(X, teacher, tanh, tanh)[0]
    else:
        raw = np.sign(X @ teacher)
    return np.clip(raw, -spec.K_y, spec.K_y)


def project_to_sphere(G: np.ndarray, radius: float) -> np.ndarray:
    """Scale every row of G onto the sphere of the given radius"""
    if radius == 0:
        return np.zeros_like(G)
    norms = np.linalg.norm(G, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    return G * (radius * RADIUS_SHRINK / norms)[:, None]


def _emit(spec: DataSpec, G: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    X = project_to_sphere(G, spec.K_x)
    return X, labels(spec, X)


def sample(spec: DataSpec, seed: int, k: int) -> Tuple[np.ndarray, float]:
    """Sample z(k) = (x, y); a pure function of (spec, seed, k)"""
    X, Y = _emit(spec, counter_rng(seed, STREAM_DATA, k).standard_normal((1, spec.dim)))
    return X[0], float(Y[0])


class DataStream:
    """One-pass sample sequence; step k consumes `batch_size` fresh samples"""

    def __init__(self, spec: DataSpec, seed: int, batch_size: int = 1):
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        self.spec = spec
        self.seed = seed
        self.batch_size = batch_size

    def batch(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        # row 0 of batch k is sample(spec, seed, k)
        rng = counter_rng(self.seed, STREAM_DATA, k)
        return _emit(self.spec, rng.standard_normal((self.batch_size, self.spec.dim)))

    def sample(self, k: int) -> Tuple[np.ndarray, float]:
        return sample(self.spec, self.seed, k)


def make_pool(spec: DataSpec, size: int, seed: int) -> SamplePool:
    """Monte Carlo pool, drawn once per experiment"""
    if size < 1:
        raise ValueError(f"pool size must be >= 1, got {size}")
    rng = counter_rng(seed, STREAM_POOL, 0)
    X, Y = _emit(spec, rng.standard_normal((size, spec.dim)))
    return SamplePool(X, Y)


def _output_weights(u: np.ndarray, bound: float, law: str) -> np.ndarray:
    if law == 'uniform':
        return bound * (2.0 * u - 1.0)
    if law == 'sign':
        return bound * np.where(u < 0.5, -1.0, 1.0)
    raise ValueError(f"unknown output-weight law '{law}' (expected 'uniform' or 'sign')")


def init_2L(spec: InitSpec, n: int, D: int, seed: int) -> Params2L:
    """Neurons i.i.d. from rho_0; the first m neurons do not depend on n"""
    if n < 1 or D < 1:
        raise ValueError(f"widths must be positive, got n={n}, D={D}")
    std = spec.std_for(D)
    # one row of D + 1 normals per neuron
    G = counter_rng(seed, STREAM_INIT, 0).standard_normal((n, D + 1))
    w1 = G[:, :D] * std
    u = ndtr(G[:, D])
    if spec.law == 'product':
        w2 = _output_weights(u, spec.k_init, spec.w2_law)
    elif spec.law == 'joint':
        # dependent on the neuron's own first-layer row, still bounded by k_init
        s = np.tanh(G[:, :D].sum(axis=1) / math.sqrt(D))
        w2 = spec.k_init * 0.5 * (_output_weights(u, 1.0, spec.w2_law) + s)
    else:
        raise ValueError(f"unknown init law '{spec.law}' (expected 'product' or 'joint')")
    return Params2L(w1, w2)


def init_3L(spec: InitSpec, n1: int, n2: int, D: int, seed: int) -> Params3L:
    """Product initialization rho_0^1 x rho_0^2 x rho_0^3"""
    if spec.law != 'product':
        raise ValueError("three-layer initialization requires independent layers (law 'product')")
    if min(n1, n2, D) < 1:
        raise ValueError(f"widths must be positive, got n1={n1}, n2={n2}, D={D}")
    w1 = counter_rng(seed, STREAM_INIT, 1).standard_normal((n1, D)) * spec.std_for(D)
    w2 = _output_weights(counter_rng(seed, STREAM_INIT, 2).random((n1, n2)), spec.k_init, spec.w2_law)
    w3 = _output_weights(counter_rng(seed, STREAM_INIT, 3).random(n2), spec.k_out, spec.w2_law)
    return Params3L(w1, w2, w3)


def initial_params(model: str, spec: InitSpec, width: int, D: int, seed: int):
    """Initialization for a model kind; three-layer networks use n1 = n2 = width"""
    if model == '2l':
        return init_2L(spec, width, D, seed)
    if model == '3l':
        return init_3L(spec, width, width, D, seed)
    raise ValueError(f"unknown model '{model}' (expected '2l' or '3l')")


def pool_risk(W, pool: SamplePool, net) -> float:
    """(1/M) sum_m R(y_m, f(x_m; W)), exactly rounded and order independent"""
    if len(pool) == 0:
        raise ValueError("pool is empty")
    return math.fsum(net.losses(pool, W)) / len(pool)
