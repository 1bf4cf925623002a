import numpy as np
import pytest

from heavyfield_lib.datagen import project_to_sphere
from heavyfield_lib.gradcheck import check_scaled_gradient, raw_gradient_fd, scaling_factors
from heavyfield_lib.models import Params2L, Params3L
from heavyfield_lib.network import make_network


def _instance(rng, D):
    x = project_to_sphere(rng.standard_normal((1, D)), np.sqrt(D))[0]
    y = float(rng.choice([-1.0, 1.0]))
    return x, y


def test_two_layer_scaled_gradient_matches_finite_differences(rng):
    net = make_network('2l', 'tanh', loss='logistic')
    for _ in range(50):
        W = Params2L(rng.standard_normal((8, 5)) / np.sqrt(5), rng.uniform(-1, 1, 8))
        x, y = _instance(rng, 5)
        report = check_scaled_gradient(x, y, W, net, rtol=1e-5)
        assert report.passed, [(l.name, l.max_abs_error) for l in report.layers]


def test_three_layer_layer_factors(rng):
    net = make_network('3l', 'tanh', loss='logistic')
    for _ in range(50):
        W = Params3L(rng.standard_normal((4, 5)) / np.sqrt(5), rng.uniform(-1, 1, (4, 3)), rng.uniform(-1, 1, 3))
        x, y = _instance(rng, 5)
        report = check_scaled_gradient(x, y, W, net, rtol=1e-4)
        assert report.passed, [(l.name, l.max_abs_error) for l in report.layers]
        assert [l.factor for l in report.layers] == [4.0, 12.0, 3.0]


@pytest.mark.parametrize('activation,loss', [('sigmoid', 'logistic'), ('tanh', 'huber')])
def test_other_activation_and_loss_pairs(rng, activation, loss):
    net = make_network('2l', activation, loss=loss, huber_delta=0.25)
    W = Params2L(rng.standard_normal((6, 4)), rng.uniform(-1, 1, 6))
    x, y = _instance(rng, 4)
    assert check_scaled_gradient(x, y, W, net, rtol=1e-5).passed


def test_unscaled_gradient_fails_the_check(rng):
    net = make_network('2l', 'tanh', loss='logistic')
    W = Params2L(rng.standard_normal((8, 5)), rng.uniform(0.5, 1, 8))
    x, y = _instance(rng, 5)
    raw = raw_gradient_fd(x, y, W, net)
    analytic = net.grad(x[None, :], [y], W)
    # the scaled gradient is n times the raw one, not equal to it
    assert not np.allclose(analytic.w2, raw.w2, rtol=1e-3)
    np.testing.assert_allclose(analytic.w2, 8 * raw.w2, rtol=1e-5, atol=1e-8)


def test_scaling_factors_reject_unknown_types():
    with pytest.raises(TypeError):
        scaling_factors(np.zeros(3))
