"""
Training dynamics: stochastic heavy ball, heavy ball on a pool, the particle
ODE and the noisy heavy ball
"""

import logging
import math
from dataclasses import replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .datagen import STREAM_NOISE, DataStream, counter_rng, initial_params, make_pool, pool_risk
from .models import Hyper, PDState, SamplePool, SHBState, Trajectory
from .network import regularize_grad

logger = logging.getLogger(__name__)

DYNAMICS = ('shb', 'hb', 'pd', 'noisy')
DEFAULT_PD_SUBSTEPS = 16


def _as_batch(z) -> Tuple[np.ndarray, np.ndarray]:
    x, y = z
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return X, np.atleast_1d(np.asarray(y, dtype=np.float64))


def _objective_grad(X, Y, W, net, h: Hyper):
    return regularize_grad(net.grad(X, Y, W), W, h.lam)


def _advance(state: SHBState, g, h: Hyper, noise=None) -> SHBState:
    W = state.W
    W_next = W + (W - state.W_prev) * h.beta - g * h.eta
    if noise is not None:
        W_next = W_next + noise
    W_next.check_finite(step=state.k + 1)
    return SHBState(W=W_next, W_prev=W, k=state.k + 1)


def shb_step(state: SHBState, z, h: Hyper, net) -> SHBState:
    """W(k+1) = W(k) + (1 - gamma eps)(W(k) - W(k-1)) - eps^2 grad(z(k), W(k))

    z is one sample (x, y) or a minibatch (X, Y); a minibatch uses the mean of
    the per-sample scaled gradients.
    """
    X, Y = _as_batch(z)
    return _advance(state, _objective_grad(X, Y, state.W, net, h), h)


def hb_step(state: SHBState, pool: SamplePool, h: Hyper, net) -> SHBState:
    """Heavy ball with the gradient averaged over a fixed pool"""
    if len(pool) == 0:
        raise ValueError("pool is empty")
    return _advance(state, _objective_grad(pool.X, pool.Y, state.W, net, h), h)


def noisy_shb_step(state: SHBState, z, h: Hyper, net, rng: np.random.Generator) -> SHBState:
    """Euler-Maruyama heavy ball with momentum noise.

    r(k+1) = r(k) + eps (-gamma r(k) - grad Psi_lam) + sqrt(eps) sqrt(2 gamma / beta) xi
    theta(k+1) = theta(k) + eps r(k+1), so the noise reaches theta as
    eps^(3/2) sqrt(2 gamma / beta) xi. One standard normal is drawn per coordinate
    on every step, also when the diffusion vanishes.
    """
    X, Y = _as_batch(z)
    W = state.W
    xi = W.from_flat(rng.standard_normal(W.flat().size))
    amplitude = h.eps ** 1.5 * h.diffusion
    noise = xi * amplitude if amplitude > 0 else None
    return _advance(state, _objective_grad(X, Y, W, net, h), h, noise=noise)


def hb_coefficients(k: int, h: Hyper) -> np.ndarray:
    """c_l^(k) = eps^2 sum_{i=0}^{k-1-l} beta^i for l = 0..k-1"""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    partial = np.cumsum(h.beta ** np.arange(k, dtype=np.float64))
    return h.eta * partial[::-1]


def hb_unrolled(W0, pool: SamplePool, h: Hyper, k: int, net):
    """W(k) = W(0) - sum_{l<k} c_l^(k) grad Psi(W(l)), each W(l) in the same form"""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(pool) == 0:
        raise ValueError("pool is empty")
    grads = []
    W = W0
    for m in range(1, k + 1):
        grads.append(_objective_grad(pool.X, pool.Y, W, net, h))
        coeffs = hb_coefficients(m, h)
        W = W0
        for c, g in zip(coeffs, grads):
            W = W - g * c
        W.check_finite(step=m)
    return W


def pd_substeps_for(h: Hyper, step: float) -> int:
    """Number of inner steps per eps; a step that does not divide eps snaps down"""
    if not step > 0:
        raise ValueError(f"PD step must be > 0, got {step}")
    if step > h.eps * (1.0 + 1e-12):
        raise ValueError(f"PD step {step} exceeds eps {h.eps}")
    substeps = int(math.ceil(h.eps / step - 1e-9))
    if not math.isclose(substeps * step, h.eps, rel_tol=1e-9):
        logger.debug("PD step %g does not divide eps %g, using %g", step, h.eps, h.eps / substeps)
    return substeps


def pd_substep(state: PDState, pool: SamplePool, h: Hyper, dt: float, net) -> PDState:
    """Semi-implicit Euler: r first with the gradient at theta, then theta with the new r"""
    g = _objective_grad(pool.X, pool.Y, state.theta, net, h)
    r = state.r + (state.r * (-h.gamma) - g) * dt
    theta = state.theta + r * dt
    return PDState(theta=theta, r=r, t=state.t + dt)


def pd_integrate(W0, pool: SamplePool, h: Hyper, net, step: Optional[float] = None,
                 T: Optional[float] = None, keep: Optional[Iterable[int]] = None) -> Trajectory:
    """Particle dynamics theta' = r, r' = -gamma r - grad Psi, reported at t = k eps"""
    if len(pool) == 0:
        raise ValueError("pool is empty")
    substeps = pd_substeps_for(h, h.eps / DEFAULT_PD_SUBSTEPS if step is None else step)
    dt = h.eps / substeps
    n_steps = h.steps_until(h.T if T is None else T)
    keep = _keep_set(n_steps, keep)
    state = PDState.initial(W0)
    snapshots, steps = [W0], [0]
    for k in range(1, n_steps + 1):
        for _ in range(substeps):
            state = pd_substep(state, pool, h, dt, net)
        state.theta.check_finite(step=k)
        state = PDState(theta=state.theta, r=state.r, t=k * h.eps)
        if k in keep:
            snapshots.append(state.theta)
            steps.append(k)
    return Trajectory(times=h.eps * np.asarray(steps, dtype=np.float64), snapshots=snapshots, label='pd')


def _keep_set(n_steps: int, keep: Optional[Iterable[int]]) -> set:
    if keep is None:
        return set(range(n_steps + 1))
    return {k for k in keep if 0 <= k <= n_steps} | {0, n_steps}


def snapshot_steps(h: Hyper, times: Optional[Sequence[float]]) -> Optional[List[int]]:
    """Grid indices for requested times, rounded down; None keeps every grid point"""
    if times is None:
        return None
    n_steps = h.n_steps
    return sorted({min(h.steps_until(t), n_steps) for t in times if t >= 0} | {0, n_steps})


def simulate(dynamics: str, W0, net, h: Hyper, stream: Optional[DataStream] = None,
             pool: Optional[SamplePool] = None, snapshot_times: Optional[Sequence[float]] = None,
             pd_substeps: int = DEFAULT_PD_SUBSTEPS) -> Trajectory:
    """Run one dynamics for floor(T / eps) steps from W0"""
    if dynamics not in DYNAMICS:
        raise ValueError(f"unknown dynamics '{dynamics}' (expected one of {', '.join(DYNAMICS)})")
    if dynamics in ('hb', 'pd') and pool is None:
        raise ValueError(f"{dynamics} dynamics needs a sample pool")
    if dynamics in ('shb', 'noisy') and stream is None:
        raise ValueError(f"{dynamics} dynamics needs a data stream")
    keep = snapshot_steps(h, snapshot_times)
    if dynamics == 'pd':
        return pd_integrate(W0, pool, h, net, step=h.eps / pd_substeps, keep=keep)

    n_steps = h.n_steps
    keep = _keep_set(n_steps, keep)
    state = SHBState.initial(W0)
    snapshots, steps = [W0], [0]
    for k in range(n_steps):
        if dynamics == 'shb':
            state = shb_step(state, stream.batch(k), h, net)
        elif dynamics == 'hb':
            state = hb_step(state, pool, h, net)
        else:
            state = noisy_shb_step(state, stream.batch(k), h, net, counter_rng(h.seed, STREAM_NOISE, k))
        if state.k in keep:
            snapshots.append(state.W)
            steps.append(state.k)
    logger.debug("%s: %d steps, %d snapshots", dynamics, n_steps, len(snapshots))
    return Trajectory(times=h.eps * np.asarray(steps, dtype=np.float64), snapshots=snapshots, label=dynamics)


def risk_curve(traj: Trajectory, pool: SamplePool, net) -> np.ndarray:
    return np.array([pool_risk(W, pool, net) for W in traj.snapshots])


def run_training(cfg, width: int, seed: int, dynamics: Optional[str] = None) -> Tuple[Trajectory, np.ndarray]:
    """Train one network described by an ExperimentConfig; returns snapshots and pool risks"""
    h = replace(cfg.hyper, seed=seed)
    net = cfg.network.build(cfg.model)
    W0 = initial_params(cfg.model, cfg.init, width, cfg.data.dim, seed)
    pool = make_pool(cfg.data, cfg.training.pool_size, seed)
    stream = DataStream(cfg.data, seed, cfg.training.batch_size)
    traj = simulate(dynamics or cfg.training.dynamics, W0, net, h, stream=stream, pool=pool,
                    snapshot_times=cfg.training.snapshot_times, pd_substeps=cfg.training.pd_substeps)
    return traj, risk_curve(traj, pool, net)
