from dataclasses import replace

import numpy as np
import pytest

from heavyfield_lib.datagen import DataStream, counter_rng, init_2L
from heavyfield_lib.dynamics import (hb_coefficients, hb_step, hb_unrolled, noisy_shb_step, pd_integrate, pd_substep,
                                     pd_substeps_for, run_training, shb_step, simulate, snapshot_steps)
from heavyfield_lib.errors import NumericalError
from heavyfield_lib.models import Hyper, InitSpec, Params2L, PDState, SHBState


def test_first_step_starts_from_rest(W2, pool, net2, hyper):
    z = (pool.X[0], pool.Y[0])
    state = shb_step(SHBState.initial(W2), z, hyper, net2)
    g = net2.grad(pool.X[:1], pool.Y[:1], W2)
    np.testing.assert_array_equal(state.W.w1, (W2 + (W2 - W2) * hyper.beta - g * hyper.eta).w1)
    assert state.k == 1
    assert state.W_prev is W2


def test_momentum_carries_the_previous_displacement(W2, pool, net2, hyper):
    s1 = shb_step(SHBState.initial(W2), (pool.X[0], pool.Y[0]), hyper, net2)
    s2 = shb_step(s1, (pool.X[1], pool.Y[1]), hyper, net2)
    g = net2.grad(pool.X[1:2], pool.Y[1:2], s1.W)
    expected = s1.W + (s1.W - W2) * hyper.beta - g * hyper.eta
    np.testing.assert_array_equal(s2.W.w2, expected.w2)


def test_single_sample_pool_heavy_ball_equals_stochastic_step(W2, pool, net2, hyper):
    one = pool.subset([4])
    a = hb_step(SHBState.initial(W2), one, hyper, net2)
    b = shb_step(SHBState.initial(W2), (pool.X[4], pool.Y[4]), hyper, net2)
    assert a.W.equals(b.W)


def test_noiseless_noisy_step_is_bit_identical(W2, data_spec, net2):
    h = Hyper(gamma=1.0, eps=0.05, lam=0.0, beta_inv=0.0, T=50.0)
    stream = DataStream(data_spec, seed=9)
    plain = noisy = SHBState.initial(W2)
    for k in range(1000):
        z = stream.batch(k)
        plain = shb_step(plain, z, h, net2)
        noisy = noisy_shb_step(noisy, z, h, net2, counter_rng(0, 3, k))
    assert noisy.W.equals(plain.W)


def test_noise_is_reproducible_and_scaled(W2, pool, net2):
    h = Hyper(gamma=1.0, eps=0.01, beta_inv=0.01)
    z = (pool.X[0], pool.Y[0])
    a = noisy_shb_step(SHBState.initial(W2), z, h, net2, counter_rng(1, 3, 0))
    b = noisy_shb_step(SHBState.initial(W2), z, h, net2, counter_rng(1, 3, 0))
    assert a.W.equals(b.W)
    plain = shb_step(SHBState.initial(W2), z, h, net2)
    xi = counter_rng(1, 3, 0).standard_normal(W2.flat().size)
    np.testing.assert_allclose((a.W - plain.W).flat(), h.eps ** 1.5 * h.diffusion * xi, rtol=1e-9, atol=1e-15)


def test_regularization_pulls_towards_zero(W2, pool, net2):
    h0 = Hyper(gamma=1.0, eps=0.05)
    h1 = replace(h0, lam=1.0)
    z = (pool.X[0], pool.Y[0])
    a = shb_step(SHBState.initial(W2), z, h0, net2)
    b = shb_step(SHBState.initial(W2), z, h1, net2)
    np.testing.assert_allclose((a.W - b.W).w2, h0.eta * W2.w2, rtol=1e-9, atol=1e-15)


def test_hb_coefficients_are_bounded_by_eps_over_gamma():
    for gamma, eps in [(1.0, 0.05), (2.0, 0.05), (0.5, 0.9)]:
        h = Hyper(gamma=gamma, eps=eps)
        c = hb_coefficients(200, h)
        assert c.shape == (200,)
        assert c[-1] == pytest.approx(h.eta)
        assert np.all(np.diff(c) <= 0)
        assert np.all(c <= eps / gamma * (1 + 1e-12))


def test_unrolled_recursion_matches_iterated_heavy_ball(pool, net2):
    h = Hyper(gamma=1.0, eps=0.05)
    for seed in range(20):
        W0 = init_2L(InitSpec(), 6, pool.D, seed=seed)
        state = SHBState.initial(W0)
        for _ in range(100):
            state = hb_step(state, pool, h, net2)
        unrolled = hb_unrolled(W0, pool, h, 100, net2)
        np.testing.assert_allclose(unrolled.flat(), state.W.flat(), rtol=0, atol=1e-10)


def test_non_finite_weights_abort_with_the_step(pool, net2, hyper):
    W = Params2L(np.ones((3, pool.D)), np.array([1.0, np.inf, 1.0]))
    with pytest.raises(NumericalError) as err:
        shb_step(SHBState.initial(W), (pool.X[0], pool.Y[0]), hyper, net2)
    assert err.value.step == 1


def test_pd_substeps():
    h = Hyper(gamma=1.0, eps=0.04)
    assert pd_substeps_for(h, 0.04 / 64) == 64
    assert pd_substeps_for(h, 0.015) == 3
    with pytest.raises(ValueError):
        pd_substeps_for(h, 0.05)
    with pytest.raises(ValueError):
        pd_substeps_for(h, 0.0)


def test_pd_approaches_heavy_ball_as_eps_shrinks(W2, pool, net2):
    gaps = []
    for eps in (0.04, 0.02, 0.01):
        h = Hyper(gamma=1.0, eps=eps, T=0.4)
        pd = pd_integrate(W2, pool, h, net2, step=eps / 32)
        state = SHBState.initial(W2)
        for _ in range(h.n_steps):
            state = hb_step(state, pool, h, net2)
        gaps.append(float(np.max(np.abs((pd.final - state.W).flat()))))
    assert gaps[0] > gaps[1] > gaps[2]


def test_snapshot_grid_always_keeps_both_ends(W2, pool, net2):
    h = Hyper(gamma=1.0, eps=0.05, T=0.5)
    assert snapshot_steps(h, [0.25]) == [0, 5, 10]
    assert snapshot_steps(h, None) is None
    traj = simulate('hb', W2, net2, h, pool=pool, snapshot_times=[0.25])
    np.testing.assert_allclose(traj.times, [0.0, 0.25, 0.5])
    pd = simulate('pd', W2, net2, h, pool=pool, snapshot_times=[0.25], pd_substeps=2)
    np.testing.assert_allclose(pd.times, traj.times)
    full = simulate('hb', W2, net2, h, pool=pool)
    assert len(full) == h.n_steps + 1


def test_grid_snaps_exact_multiples():
    h = Hyper(gamma=1.0, eps=0.05, T=1.0)
    assert h.n_steps == 20
    assert Hyper(gamma=1.0, eps=0.1, T=0.3).n_steps == 3


def test_simulate_argument_checks(W2, pool, net2, hyper, data_spec):
    with pytest.raises(ValueError):
        simulate('adam', W2, net2, hyper, pool=pool)
    with pytest.raises(ValueError):
        simulate('hb', W2, net2, hyper)
    with pytest.raises(ValueError):
        simulate('shb', W2, net2, hyper, pool=pool)
    traj = simulate('shb', W2, net2, hyper, stream=DataStream(data_spec, seed=0))
    assert traj.label == 'shb'


def test_hyper_validation():
    with pytest.raises(ValueError):
        Hyper(gamma=1.0, eps=1.5)
    with pytest.raises(ValueError):
        Hyper(gamma=1.0, eps=0.1, lam=-1.0)
    h = Hyper(gamma=2.0, eps=0.05)
    assert h.beta == pytest.approx(0.9)
    assert h.eta == pytest.approx(0.0025)


def test_run_training_is_deterministic(make_config, tiny):
    cfg = make_config(**tiny)
    traj_a, risks_a = run_training(cfg, 4, seed=0)
    traj_b, risks_b = run_training(cfg, 4, seed=0)
    assert traj_a.final.equals(traj_b.final)
    np.testing.assert_array_equal(risks_a, risks_b)
    traj_c, _ = run_training(cfg, 4, seed=1)
    assert not traj_a.final.equals(traj_c.final)


class QuadraticPotential:
    """Psi(theta) = |theta|^2 / 2, whose gradient is theta itself"""

    def grad(self, X, Y, W):
        return W


class FlatPotential:
    def grad(self, X, Y, W):
        return W.zeros_like()


def _scalar_params(value):
    return Params2L(np.zeros((1, 1)), np.array([value]))


def test_pd_substep_updates_momentum_before_position(pool):
    h = Hyper(gamma=1.0, eps=0.1)
    state = pd_substep(PDState.initial(_scalar_params(1.0)), pool, h, 0.1, QuadraticPotential())
    assert state.r.w2[0] == pytest.approx(-0.1, abs=1e-15)
    assert state.theta.w2[0] == pytest.approx(0.99, abs=1e-15)
    assert state.t == pytest.approx(0.1)


def test_pd_is_at_rest_without_a_gradient(W2, pool):
    h = Hyper(gamma=1.0, eps=0.1, T=1.0)
    state = PDState.initial(W2)
    for _ in range(5):
        state = pd_substep(state, pool, h, 0.02, FlatPotential())
    assert state.theta.equals(W2)
    assert state.r.equals(W2.zeros_like())
    traj = pd_integrate(W2, pool, h, FlatPotential(), step=0.05)
    assert all(W.equals(W2) for W in traj.snapshots)


def test_halving_the_pd_step_halves_the_endpoint_change(W2, pool, net2):
    h = Hyper(gamma=1.0, eps=0.1, T=1.0)
    ends = [pd_integrate(W2, pool, h, net2, step=h.eps / k).final for k in (4, 8, 16)]
    ratio = np.linalg.norm((ends[0] - ends[1]).flat()) / np.linalg.norm((ends[1] - ends[2]).flat())
    assert 1.6 <= ratio <= 2.5
