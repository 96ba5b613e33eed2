import numpy as np
import pytest
from numpy.testing import assert_allclose

from core.dft import (
    DftConfig,
    LinearGaussianSampler,
    sampler_grad,
    surrogate_gradient,
    verify_grad2_identity,
    verify_lemma1,
)
from core.nn import Activation, forward, init_net
from core.score import perturb_with
from core.targets import GaussianTarget, make_target
from core.utils.errors import ConfigurationError
from core.utils.prng import Prng
from numeric_checks import rel_error


@pytest.fixture
def skewed():
    return LinearGaussianSampler([[1.0, 0.3], [0.0, 0.8]], [0.5, -0.2])


class TestLinearGaussianSampler:
    def test_parameter_round_trip(self, skewed):
        again = skewed.with_theta(skewed.theta())
        assert_allclose(again.A, skewed.A)
        assert_allclose(again.b, skewed.b)
        assert skewed.n_params == 6

    def test_score_jacobian_matches_finite_differences(self, skewed, rng):
        x = rng.normal(size=(4, 2))
        sigma, h = 0.3, 1e-6
        analytic = skewed.score_param_jacobian(x, sigma)
        theta = skewed.theta()
        numeric = np.empty_like(analytic)
        for k in range(theta.size):
            plus, minus = theta.copy(), theta.copy()
            plus[k] += h
            minus[k] -= h
            numeric[:, :, k] = (skewed.with_theta(plus).perturbed_score(x, sigma)
                                - skewed.with_theta(minus).perturbed_score(x, sigma)) / (2 * h)
        assert rel_error(analytic, numeric) < 1e-6

    def test_perturbed_score_net(self, skewed, rng):
        x = rng.normal(size=(5, 2))
        out, _ = forward(skewed.perturbed_score_net(0.2), x)
        assert_allclose(out, skewed.perturbed_score(x, 0.2), atol=1e-12)

    def test_mismatched_shapes(self):
        with pytest.raises(ConfigurationError):
            LinearGaussianSampler(np.eye(2), np.zeros(3))


class TestScoreDerivativeIdentity:
    def test_identity_sampler_standard_normal(self):
        sampler = LinearGaussianSampler(np.eye(2), np.zeros(2))
        report = verify_grad2_identity(sampler, make_target("gaussian"), 0.1, 1_000_000, Prng(2024))
        assert report.status == "pass"
        assert np.all(report.rel_error < 0.05)

    def test_skewed_sampler_passes(self, skewed):
        report = verify_grad2_identity(skewed, make_target("gaussian"), 0.1, 1_000_000, Prng(7))
        assert report.status == "pass"
        assert report.lhs.shape == report.rhs.shape == (6,)

    def test_random_linear_sampler_passes(self):
        sampler = LinearGaussianSampler(np.random.default_rng(3).normal(size=(2, 2)), np.zeros(2))
        report = verify_grad2_identity(sampler, make_target("gaussian"), 0.1, 1_000_000, Prng(8))
        assert report.status == "pass"

    def test_too_few_samples_is_inconclusive(self, skewed):
        report = verify_grad2_identity(skewed, make_target("mog2"), 0.1, 10, Prng(7), tolerance=1e-6)
        assert report.status == "inconclusive"

    def test_zero_step_rejected(self, skewed):
        with pytest.raises(ConfigurationError):
            verify_grad2_identity(skewed, make_target("gaussian"), 0.1, 100, Prng(0), h=0.0)

    def test_log_offset_changes_nothing(self, skewed):
        plain = verify_grad2_identity(skewed, make_target("gaussian"), 0.1, 2000, Prng(3))
        shifted = verify_grad2_identity(skewed, make_target("gaussian", log_offset=7.0), 0.1, 2000, Prng(3))
        assert plain.to_json() == shifted.to_json()

    def test_chunking_is_seeded(self, skewed):
        a = verify_grad2_identity(skewed, make_target("gaussian"), 0.1, 3000, Prng(5), chunk=1000)
        b = verify_grad2_identity(skewed, make_target("gaussian"), 0.1, 3000, Prng(5), chunk=1000)
        assert a.to_json() == b.to_json()


class TestConditionalScoreIdentity:
    def test_zero_field_is_exact(self, skewed):
        report = verify_lemma1(skewed, np.zeros_like, 0.1, 1000, Prng(1))
        assert report.estimate == 0.0
        assert report.stderr == 0.0

    def test_constant_field(self, skewed):
        report = verify_lemma1(skewed, lambda x: np.broadcast_to([1.0, -2.0], x.shape), 0.1, 1_000_000, Prng(11))
        assert report.within_three_stderr

    def test_identity_field(self, skewed):
        report = verify_lemma1(skewed, lambda x: x, 0.1, 1_000_000, Prng(12))
        assert report.within_three_stderr

    def test_non_finite_field(self, skewed):
        with pytest.raises(ConfigurationError):
            verify_lemma1(skewed, lambda x: np.full_like(x, np.nan), 0.1, 100, Prng(1))


def test_matched_sampler_has_no_gradient(skewed, rng):
    sigma = 0.1
    target = GaussianTarget(skewed.b, skewed.A @ skewed.A.T + sigma**2 * np.eye(2))
    score_net = skewed.perturbed_score_net(sigma)
    z = rng.normal(size=(256, 2))
    batch = perturb_with(skewed.sample(z), rng.normal(size=(256, 2)), sigma)
    g_x = surrogate_gradient(target, score_net, batch, DftConfig()).g_x
    assert sampler_grad(skewed.as_net(), z, g_x).norm() < 1e-8


def test_conditional_score_identity_for_network_field(skewed):
    net = init_net([2, 8, 2], Activation("gelu"), Prng(3))
    report = verify_lemma1(skewed, lambda x: forward(net, x)[0], 0.1, 1_000_000, Prng(13))
    assert report.within_three_stderr
