import numpy as np
import pytest

from heavyfield_lib.errors import DimensionError
from heavyfield_lib.models import Params2L, Params3L, SamplePool
from heavyfield_lib.network import (ACTIVATION_SUPREMA, Activation, Loss, batch_grad2, forward2, forward3,
                                    make_network, output_bound_2L, output_bound_3L, regularize_grad, scaled_grad2)


def test_forward2_is_neuron_average():
    W = Params2L(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([2.0, -4.0]))
    x = np.array([0.5, -0.25])
    expected = (2.0 * np.tanh(0.5) - 4.0 * np.tanh(-0.25)) / 2
    assert forward2(x, W, Activation('tanh')) == pytest.approx(expected, rel=1e-14)


def test_forward2_batch_and_single_agree(W2, pool):
    act = Activation('tanh')
    batch = forward2(pool.X, W2, act)
    assert batch.shape == (len(pool),)
    assert isinstance(forward2(pool.X[0], W2, act), float)
    assert forward2(pool.X[0], W2, act) == pytest.approx(batch[0], abs=1e-14)


def test_forward2_rejects_wrong_dimension(W2):
    with pytest.raises(DimensionError):
        forward2(np.zeros(W2.D + 1), W2, Activation('tanh'))


def test_forward3_hidden_layers(W3, pool):
    act = Activation('tanh')
    yhat, H1, H2 = forward3(pool.X, W3, act, act)
    assert H1.shape == (len(pool), W3.n1)
    assert H2.shape == (len(pool), W3.n2)
    np.testing.assert_allclose(yhat, np.tanh(H2) @ W3.w3 / W3.n2, rtol=1e-14)


def test_output_bound_holds_for_every_input(W2, pool):
    act = Activation('tanh')
    assert np.max(np.abs(forward2(pool.X, W2, act))) <= output_bound_2L(W2, act) + 1e-15


def test_batch_gradient_is_mean_of_sample_gradients(W2, pool, net2):
    act, loss = net2.act, net2.loss
    batch = batch_grad2(pool.X[:5], pool.Y[:5], W2, act, loss)
    singles = [scaled_grad2(x, y, W2, act, loss) for x, y in zip(pool.X[:5], pool.Y[:5])]
    np.testing.assert_allclose(batch.w1, np.mean([g.w1 for g in singles], axis=0), atol=1e-14)
    np.testing.assert_allclose(batch.w2, np.mean([g.w2 for g in singles], axis=0), atol=1e-14)


def test_regularize_grad_zero_is_identity(W2, pool, net2):
    g = net2.grad(pool.X, pool.Y, W2)
    assert regularize_grad(g, W2, 0.0) is g
    shifted = regularize_grad(g, W2, 0.5)
    np.testing.assert_array_equal(shifted.w2, g.w2 + 0.5 * W2.w2)
    with pytest.raises(ValueError):
        regularize_grad(g, W2, -1.0)


@pytest.mark.parametrize('kind', ['tanh', 'sigmoid'])
def test_scanned_suprema_match_closed_form(kind):
    scanned = Activation(kind).sup_norms()
    for s, exact in zip(scanned, ACTIVATION_SUPREMA[kind]):
        assert s <= exact + 1e-12
        assert s == pytest.approx(exact, rel=1e-3)


def test_sigmoid_derivatives_match_finite_differences():
    act = Activation('sigmoid')
    z = np.linspace(-4, 4, 9)
    h = 1e-6
    np.testing.assert_allclose(act.derivative(z), (act.value(z + h) - act.value(z - h)) / (2 * h), atol=1e-9)
    np.testing.assert_allclose(act.second_derivative(z),
                               (act.derivative(z + h) - act.derivative(z - h)) / (2 * h), atol=1e-8)


def test_logistic_loss_is_stable_for_large_margins():
    loss = Loss('logistic')
    assert loss.value(1.0, 1000.0) == pytest.approx(0.0, abs=1e-300)
    assert loss.value(1.0, -1000.0) == pytest.approx(1000.0)
    assert abs(loss.derivative(1.0, -1000.0)) <= 1.0
    assert loss.derivative_bound(1.0, 10.0) <= 1.0


def test_huber_derivative_is_clipped():
    loss = Loss('huber', delta=0.5)
    np.testing.assert_allclose(loss.derivative(0.0, np.array([-3.0, 0.2, 3.0])), [-0.5, 0.2, 0.5])
    assert loss.lipschitz_estimate(1.0, 5.0) == pytest.approx(1.0, rel=1e-6)


def test_square_loss_needs_unsafe_flag(caplog):
    with pytest.raises(ValueError):
        Loss('square')
    Loss('square', unsafe=True)
    assert 'square loss' in caplog.text


def test_make_network_rejects_unknown_kinds():
    with pytest.raises(ValueError):
        make_network('4l')
    with pytest.raises(ValueError):
        make_network('2l', activation='relu')
    with pytest.raises(ValueError):
        make_network('2l', loss='hinge')


def test_three_layer_second_activation_defaults_to_first():
    net = make_network('3l', 'sigmoid')
    assert net.act2.kind == 'sigmoid'
    assert make_network('3l', 'sigmoid', 'tanh').act2.kind == 'tanh'


def test_three_layer_losses_on_pool(W3, pool, net3):
    losses = net3.losses(pool, W3)
    assert losses.shape == (len(pool),)
    assert np.all(losses > 0)


def test_parameter_shapes_are_validated():
    with pytest.raises(DimensionError):
        Params2L(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(DimensionError):
        Params3L(np.zeros((3, 2)), np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(DimensionError):
        SamplePool(np.zeros((3, 2)), np.zeros(2))


def test_three_layer_output_bound_holds_for_every_input(W3, pool, net3):
    yhat = forward3(pool.X, W3, net3.act1, net3.act2)[0]
    assert np.max(np.abs(yhat)) <= output_bound_3L(W3, net3.act2) + 1e-15
    assert net3.output_bound(W3) == output_bound_3L(W3, net3.act2)


def test_three_layer_output_ignores_neuron_order(W3, pool, net3, rng):
    p1 = rng.permutation(W3.n1)
    p2 = rng.permutation(W3.n2)
    shuffled = Params3L(W3.w1[p1], W3.w2[p1][:, p2], W3.w3[p2])
    np.testing.assert_allclose(net3.forward(pool.X, shuffled), net3.forward(pool.X, W3), rtol=1e-12, atol=1e-14)
