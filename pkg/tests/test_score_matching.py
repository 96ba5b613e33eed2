import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.nn import Activation, adam_init, init_net, linear_net
from core.nn.net import flatten
from core.score import (
    NoiseModel,
    conditional_score,
    dsm_loss_and_grad,
    dsm_step,
    perturb,
    perturb_with,
    sm_loss,
    sm_loss_and_grad,
    sm_step,
)
from core.utils.errors import ConfigurationError, NumericError, UnsupportedConfigurationError
from core.utils.prng import Prng
from numeric_checks import numeric_param_grad, rel_error


class TestPerturbation:
    def test_perturb_with(self):
        batch = perturb_with([[1.0, 2.0]], [[0.5, -1.0]], 0.2)
        assert_allclose(batch.x_sigma, [[1.1, 1.8]])
        assert_allclose(conditional_score(batch), [[-2.5, 5.0]])

    def test_perturb_is_seeded(self):
        x0 = np.zeros((4, 2))
        a = perturb(x0, NoiseModel(0.3), Prng(2))
        b = perturb(x0, NoiseModel(0.3), Prng(2))
        assert_array_equal(a.eps, b.eps)
        assert_allclose(a.x_sigma, 0.3 * a.eps)

    def test_noise_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            NoiseModel(0.0)


class TestDenoising:
    def test_exact_score_has_zero_loss(self):
        # a zero net matches the conditional score when eps is zero
        net = linear_net(np.zeros((2, 2)), np.zeros(2))
        loss, grads = dsm_loss_and_grad(net, perturb_with(np.ones((3, 2)), np.zeros((3, 2)), 0.1))
        assert loss == 0.0
        assert grads.norm() == 0.0

    def test_gradient_matches_finite_differences(self, rng):
        net = init_net([2, 6, 2], Activation("gelu"), Prng(3))
        batch = perturb_with(rng.normal(size=(5, 2)), rng.normal(size=(5, 2)), 0.3)
        _, grads = dsm_loss_and_grad(net, batch)
        numeric = numeric_param_grad(net, lambda n: dsm_loss_and_grad(n, batch)[0])
        assert rel_error(flatten(grads.params()), numeric) < 1e-4

    def test_learns_gaussian_score(self):
        # x ~ N(0, I), sigma 0.5: the perturbed score is -x / 1.25
        net = linear_net(np.zeros((2, 2)), np.zeros(2))
        state = adam_init(net.params(), lr=0.02)
        prng = Prng(17)
        for t in range(400):
            x0 = prng.child(t).normal((512, 2))
            _, net, state = dsm_step(net, x0, NoiseModel(0.5), state, prng.child(10_000 + t))
        assert_allclose(net.weights[0], -0.8 * np.eye(2), atol=0.15)
        assert_allclose(net.biases[0], np.zeros(2), atol=0.15)

    def test_non_finite_loss(self):
        net = linear_net(np.eye(2), np.zeros(2))
        with pytest.raises(NumericError):
            dsm_loss_and_grad(net, perturb_with([[1e200, 0.0]], [[0.0, 0.0]], 0.1))


class TestExactScoreMatching:
    def test_linear_net_loss(self, rng):
        a = np.array([[-1.0, 0.2], [0.1, -0.5]])
        b = np.array([0.3, -0.1])
        x = rng.normal(size=(7, 2))
        expected = np.mean(np.sum((x @ a.T + b) ** 2, axis=1)) + 2.0 * np.trace(a)
        assert sm_loss(linear_net(a, b), x) == pytest.approx(expected, rel=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        net = init_net([2, 5, 2], Activation("gelu"), Prng(6))
        x = rng.normal(size=(6, 2))
        _, grads = sm_loss_and_grad(net, x)
        numeric = numeric_param_grad(net, lambda n: sm_loss(n, x))
        assert rel_error(flatten(grads.params()), numeric) < 1e-4

    def test_step_lowers_loss_on_gaussian(self, rng):
        net = linear_net(np.zeros((2, 2)), np.zeros(2))
        state = adam_init(net.params(), lr=0.05)
        x = rng.normal(size=(256, 2))
        first, net, state = sm_step(net, x, state)
        for _ in range(50):
            last, net, state = sm_step(net, x, state)
        assert last < first

    def test_high_dimension_rejected(self):
        net = linear_net(np.eye(9), np.zeros(9))
        with pytest.raises(UnsupportedConfigurationError):
            sm_loss(net, np.zeros((2, 9)))
