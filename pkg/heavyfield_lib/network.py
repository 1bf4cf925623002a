"""
Mean-field scaled two- and three-layer networks

Outputs are averages over neurons, f(x; W) = (1/n) sum_j w2(j) sigma(w1(j)^T x),
and gradients are reported SCALED: the two-layer gradient is n times the raw
partial derivative, the three-layer layer factors are n1, n1*n2 and n2.
Every gradient routine works on a batch; the mean over the batch of the
per-sample scaled gradients is returned, so a batch of one is the per-sample
gradient itself.
"""

import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from .errors import DimensionError
from .models import Params2L, Params3L, SamplePool

logger = logging.getLogger(__name__)

ACTIVATIONS = ('tanh', 'sigmoid')
LOSSES = ('logistic', 'huber', 'square')

# Closed-form suprema of |sigma|, |sigma'|, |sigma''|
ACTIVATION_SUPREMA = {
    'tanh': (1.0, 1.0, 4.0 / (3.0 * math.sqrt(3.0))),
    'sigmoid': (1.0, 0.25, 1.0 / (6.0 * math.sqrt(3.0))),
}

SCAN_RADIUS = 10.0
SCAN_POINTS = 20001


class Activation:
    """Bounded activation with closed-form derivatives"""

    def __init__(self, kind: str = 'tanh'):
        if kind not in ACTIVATIONS:
            raise ValueError(f"unknown activation '{kind}' (expected one of {', '.join(ACTIVATIONS)})")
        self.kind = kind

    def __repr__(self):
        return f"Activation({self.kind!r})"

    def value(self, z: np.ndarray) -> np.ndarray:
        if self.kind == 'tanh':
            return np.tanh(z)
        return expit(z)

    def derivative(self, z: np.ndarray) -> np.ndarray:
        if self.kind == 'tanh':
            t = np.tanh(z)
            return 1.0 - t * t
        s = expit(z)
        return s * (1.0 - s)

    def second_derivative(self, z: np.ndarray) -> np.ndarray:
        if self.kind == 'tanh':
            t = np.tanh(z)
            return -2.0 * t * (1.0 - t * t)
        s = expit(z)
        return s * (1.0 - s) * (1.0 - 2.0 * s)

    @property
    def bound(self) -> float:
        """K_sigma = sup |sigma|"""
        return ACTIVATION_SUPREMA[self.kind][0]

    def sup_norms(self, radius: float = SCAN_RADIUS, points: int = SCAN_POINTS) -> Tuple[float, float, float]:
        """Scanned sup of |sigma|, |sigma'|, |sigma''| on [-radius, radius]"""
        z = np.linspace(-radius, radius, points)
        return (float(np.max(np.abs(self.value(z)))),
                float(np.max(np.abs(self.derivative(z)))),
                float(np.max(np.abs(self.second_derivative(z)))))


class Loss:
    """Loss R(y, yhat) with its derivative in yhat"""

    def __init__(self, kind: str = 'logistic', delta: float = 1.0, unsafe: bool = False):
        if kind not in LOSSES:
            raise ValueError(f"unknown loss '{kind}' (expected one of {', '.join(LOSSES)})")
        if kind == 'huber' and not delta > 0:
            raise ValueError(f"huber delta must be > 0, got {delta}")
        if kind == 'square':
            if not unsafe:
                raise ValueError("square loss has an unbounded derivative; enable unsafe_assumptions to use it")
            logger.warning("square loss selected: the bounded-derivative assumption does not hold")
        self.kind = kind
        self.delta = float(delta)
        self.unsafe = unsafe

    def __repr__(self):
        if self.kind == 'huber':
            return f"Loss('huber', delta={self.delta})"
        return f"Loss({self.kind!r})"

    def value(self, y, yhat):
        y = np.asarray(y, dtype=np.float64)
        yhat = np.asarray(yhat, dtype=np.float64)
        if self.kind == 'logistic':
            return np.logaddexp(0.0, -y * yhat)
        r = yhat - y
        if self.kind == 'huber':
            a = np.abs(r)
            return np.where(a <= self.delta, 0.5 * r * r, self.delta * (a - 0.5 * self.delta))
        return 0.5 * r * r

    def derivative(self, y, yhat):
        y = np.asarray(y, dtype=np.float64)
        yhat = np.asarray(yhat, dtype=np.float64)
        if self.kind == 'logistic':
            return -y * expit(-y * yhat)
        r = yhat - y
        if self.kind == 'huber':
            return np.clip(r, -self.delta, self.delta)
        return r

    def derivative_bound(self, y_max: float, yhat_max: float, points: int = 401) -> float:
        """Scanned sup of |d2 R| over |y| <= y_max, |yhat| <= yhat_max"""
        y, yhat = self._grid(y_max, yhat_max, points)
        return float(np.max(np.abs(self.derivative(y, yhat))))

    def lipschitz_estimate(self, y_max: float, yhat_max: float, points: int = 401) -> float:
        """Largest difference quotient of d2 R in yhat on the scan grid"""
        y, yhat = self._grid(y_max, yhat_max, points)
        d = self.derivative(y, yhat)
        step = np.diff(yhat, axis=1)
        return float(np.max(np.abs(np.diff(d, axis=1)) / step))

    @staticmethod
    def _grid(y_max: float, yhat_max: float, points: int):
        ys = np.linspace(-y_max, y_max, 21)
        yhats = np.linspace(-yhat_max, yhat_max, points)
        return np.meshgrid(ys, yhats, indexing='ij')


def _as_batch(x, D: int) -> Tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != D:
        raise DimensionError(f"input dimension {X.shape[-1]} does not match network input dimension {D}")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains non-finite values")
    return X, single


def _as_labels(y, M: int) -> np.ndarray:
    Y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if Y.shape != (M,):
        raise DimensionError(f"expected {M} labels, got shape {Y.shape}")
    return Y


def forward2(x, W: Params2L, act: Activation) -> Union[float, np.ndarray]:
    """yhat = (1/n) sum_j w2(j) sigma(w1(j)^T x); x may be one input or a batch"""
    X, single = _as_batch(x, W.D)
    yhat = act.value(X @ W.w1.T) @ W.w2 / W.n
    return float(yhat[0]) if single else yhat


def forward3(x, W: Params3L, act1: Activation, act2: Activation):
    """Three-layer output with the hidden pre-activations H1, H2"""
    X, single = _as_batch(x, W.D)
    H1 = X @ W.w1.T
    H2 = act1.value(H1) @ W.w2 / W.n1
    yhat = act2.value(H2) @ W.w3 / W.n2
    if single:
        return float(yhat[0]), H1[0], H2[0]
    return yhat, H1, H2


def batch_grad2(X, Y, W: Params2L, act: Activation, loss: Loss) -> Params2L:
    X, _ = _as_batch(X, W.D)
    Y = _as_labels(Y, X.shape[0])
    M = X.shape[0]
    H = X @ W.w1.T
    A = act.value(H)
    dR = loss.derivative(Y, A @ W.w2 / W.n)
    g2 = A.T @ dR / M
    g1 = ((dR[:, None] * act.derivative(H)) * W.w2[None, :]).T @ X / M
    return Params2L(g1, g2)


def batch_grad3(X, Y, W: Params3L, act1: Activation, act2: Activation, loss: Loss) -> Params3L:
    X, _ = _as_batch(X, W.D)
    Y = _as_labels(Y, X.shape[0])
    M = X.shape[0]
    H1 = X @ W.w1.T
    A1 = act1.value(H1)
    H2 = A1 @ W.w2 / W.n1
    A2 = act2.value(H2)
    dR = loss.derivative(Y, A2 @ W.w3 / W.n2)
    g3 = A2.T @ dR / M
    dH2 = dR[:, None] * W.w3[None, :] * act2.derivative(H2)
    g2 = A1.T @ dH2 / M
    # inner average over the second hidden layer
    dH1 = (dH2 @ W.w2.T / W.n2) * act1.derivative(H1)
    g1 = dH1.T @ X / M
    return Params3L(g1, g2, g3)


def scaled_grad2(x, y, W: Params2L, act: Activation, loss: Loss) -> Params2L:
    """Per-sample scaled gradient, n times the raw partials of R(y, f(x; W))"""
    return batch_grad2(np.asarray(x, dtype=np.float64)[None, :], [y], W, act, loss)


def scaled_grad3(x, y, W: Params3L, act1: Activation, act2: Activation, loss: Loss) -> Params3L:
    return batch_grad3(np.asarray(x, dtype=np.float64)[None, :], [y], W, act1, act2, loss)


def regularize_grad(g, W, lam: float):
    """g + lam * W; lam = 0 returns g itself"""
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    if not g.same_shape(W):
        raise DimensionError("gradient and parameter shapes differ")
    if lam == 0:
        return g
    return g + W * lam


def output_bound_2L(W: Params2L, act: Activation) -> float:
    """K_sigma * mean_j |w2(j)|, a bound on |forward2| for every input"""
    return act.bound * float(np.mean(np.abs(W.w2)))


def output_bound_3L(W: Params3L, act2: Activation) -> float:
    return act2.bound * float(np.max(np.abs(W.w3)))


class TwoLayerNet:
    """Two-layer architecture bound to its activation and loss"""
    model = '2l'

    def __init__(self, act: Activation, loss: Loss):
        self.act = act
        self.loss = loss

    def forward(self, X, W: Params2L):
        return forward2(X, W, self.act)

    def grad(self, X, Y, W: Params2L) -> Params2L:
        return batch_grad2(X, Y, W, self.act, self.loss)

    def losses(self, pool: SamplePool, W: Params2L) -> np.ndarray:
        return self.loss.value(pool.Y, forward2(pool.X, W, self.act))

    def output_bound(self, W: Params2L) -> float:
        return output_bound_2L(W, self.act)


class ThreeLayerNet:
    """Three-layer architecture bound to its activations and loss"""
    model = '3l'

    def __init__(self, act1: Activation, act2: Activation, loss: Loss):
        self.act1 = act1
        self.act2 = act2
        self.loss = loss

    def forward(self, X, W: Params3L):
        return forward3(X, W, self.act1, self.act2)[0]

    def grad(self, X, Y, W: Params3L) -> Params3L:
        return batch_grad3(X, Y, W, self.act1, self.act2, self.loss)

    def losses(self, pool: SamplePool, W: Params3L) -> np.ndarray:
        return self.loss.value(pool.Y, self.forward(pool.X, W))

    def output_bound(self, W: Params3L) -> float:
        return output_bound_3L(W, self.act2)


def make_network(model: str = '2l', activation: str = 'tanh', activation2: Optional[str] = None,
                 loss: str = 'logistic', huber_delta: float = 1.0, unsafe: bool = False):
    """Build the network for a model kind ('2l' or '3l')"""
    loss_fn = Loss(loss, delta=huber_delta, unsafe=unsafe)
    if model == '2l':
        return TwoLayerNet(Activation(activation), loss_fn)
    if model == '3l':
        return ThreeLayerNet(Activation(activation), Activation(activation2 or activation), loss_fn)
    raise ValueError(f"unknown model '{model}' (expected '2l' or '3l')")
