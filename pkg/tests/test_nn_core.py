import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.nn import (
    Activation,
    FeedForwardNet,
    adam_init,
    adam_step,
    backward_params,
    forward,
    init_net,
    input_jacobian,
    linear_net,
    load_net,
    save_net,
    trace_jacobian_params,
    vjp_input,
)
from core.nn.net import flatten
from core.utils.errors import ConfigurationError, NumericError, ShapeError, StateError
from core.utils.prng import Prng
from numeric_checks import numeric_param_grad, rel_error


class TestInit:
    def test_same_seed_same_weights(self):
        a = init_net([2, 2], Activation("elu"), Prng(7))
        b = init_net([2, 2], Activation("elu"), Prng(7))
        assert_array_equal(a.weights[0], b.weights[0])

    def test_different_streams_differ(self):
        a = init_net([2, 2], Activation("elu"), Prng(7, 0))
        b = init_net([2, 2], Activation("elu"), Prng(7, 1))
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_biases_start_at_zero(self):
        net = init_net([2, 400, 400, 400, 2], Activation("elu"), Prng(3))
        assert all(np.all(b == 0.0) for b in net.biases)
        assert net.n_params() == 2 * 400 + 400 + 2 * (400 * 400 + 400) + 400 * 2 + 2

    @pytest.mark.parametrize("dims", [[2], [], [2, 0], [3, -1, 2]])
    def test_bad_dims(self, dims):
        with pytest.raises(ConfigurationError):
            init_net(dims, Activation("elu"), Prng(0))

    def test_unknown_activation(self):
        with pytest.raises(ConfigurationError):
            Activation("relu6")


class TestForward:
    def test_identity_map(self):
        out, _ = forward(linear_net(np.eye(2), np.zeros(2)), [[1.0, 2.0]])
        assert_array_equal(out, [[1.0, 2.0]])

    def test_affine(self):
        out, _ = forward(linear_net([[2.0, 0.0], [0.0, 3.0]], [1.0, 1.0]), [[1.0, 1.0]])
        assert_array_equal(out, [[3.0, 4.0]])

    def test_leaky_relu_hidden_value(self):
        net = FeedForwardNet([1, 1, 1], [np.eye(1), np.eye(1)], [np.zeros(1), np.zeros(1)],
                             Activation("leaky_relu", 0.2))
        out, tape = forward(net, [[-1.0]])
        assert_allclose(out, [[-0.2]])
        assert_allclose(tape.preacts[0], [[-1.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            forward(linear_net(np.eye(2), np.zeros(2)), np.ones((3, 3)))

    def test_non_finite_input(self):
        with pytest.raises(NumericError) as info:
            forward(linear_net(np.eye(2), np.zeros(2)), [[0.0, 0.0], [np.nan, 1.0]])
        assert info.value.index == 1


class TestBackward:
    def test_affine_gradient(self):
        net = linear_net(np.eye(2), np.zeros(2))
        _, tape = forward(net, [[1.0, 0.0]])
        grads = backward_params(net, tape, [[1.0, 0.0]])
        assert_array_equal(grads.weights[0], [[1.0, 0.0], [0.0, 0.0]])
        assert_array_equal(grads.biases[0], [1.0, 0.0])

    def test_zero_cotangent(self, rng):
        net = init_net([3, 5, 2], Activation("gelu"), Prng(1))
        _, tape = forward(net, rng.normal(size=(4, 3)))
        grads = backward_params(net, tape, np.zeros((4, 2)))
        assert grads.norm() == 0.0
        assert_array_equal(vjp_input(net, tape, np.zeros((4, 2))), np.zeros((4, 3)))

    @pytest.mark.parametrize("activation", ["elu", "leaky_relu", "gelu", "identity"])
    def test_param_gradient_matches_finite_differences(self, activation, rng):
        net = init_net([4, 8, 8, 4], Activation(activation), Prng(11))
        x = rng.normal(size=(3, 4))
        v = rng.normal(size=(3, 4))
        _, tape = forward(net, x)
        analytic = flatten(backward_params(net, tape, v).params())
        numeric = numeric_param_grad(net, lambda n: float(np.sum(v * forward(n, x)[0])))
        assert rel_error(analytic, numeric) < 1e-4

    @pytest.mark.parametrize("activation", ["elu", "gelu"])
    def test_vjp_input_matches_finite_differences(self, activation, rng):
        net = init_net([3, 6, 6, 2], Activation(activation), Prng(5))
        x = rng.normal(size=(4, 3))
        v = rng.normal(size=(4, 2))
        _, tape = forward(net, x)
        analytic = vjp_input(net, tape, v)
        h = 1e-4
        numeric = np.zeros_like(x)
        for j in range(3):
            step = np.zeros_like(x)
            step[:, j] = h
            plus = np.sum(v * forward(net, x + step)[0], axis=1)
            minus = np.sum(v * forward(net, x - step)[0], axis=1)
            numeric[:, j] = (plus - minus) / (2 * h)
        assert rel_error(analytic, numeric) < 1e-4

    def test_vjp_is_linear(self, rng):
        net = init_net([3, 6, 3], Activation("gelu"), Prng(2))
        _, tape = forward(net, rng.normal(size=(5, 3)))
        u, w = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
        combined = vjp_input(net, tape, 2.5 * u - 0.75 * w)
        separate = 2.5 * vjp_input(net, tape, u) - 0.75 * vjp_input(net, tape, w)
        assert_allclose(combined, separate, rtol=0, atol=1e-12)

    def test_tape_from_other_net(self, rng):
        net = init_net([2, 4, 2], Activation("elu"), Prng(0))
        _, tape = forward(net, rng.normal(size=(2, 2)))
        with pytest.raises(StateError):
            backward_params(net.copy(), tape, np.ones((2, 2)))

    def test_cotangent_shape(self, rng):
        net = init_net([2, 4, 2], Activation("elu"), Prng(0))
        _, tape = forward(net, rng.normal(size=(2, 2)))
        with pytest.raises(ShapeError):
            vjp_input(net, tape, np.ones((2, 3)))


class TestJacobians:
    def test_input_jacobian_rows_match_vjp(self, rng):
        net = init_net([3, 5, 2], Activation("gelu"), Prng(4))
        x = rng.normal(size=(4, 3))
        _, tape = forward(net, x)
        jac = input_jacobian(net, tape)
        assert jac.shape == (4, 2, 3)
        for i in range(2):
            unit = np.zeros((4, 2))
            unit[:, i] = 1.0
            assert_allclose(jac[:, i, :], vjp_input(net, tape, unit), atol=1e-12)

    @pytest.mark.parametrize("activation", ["gelu", "identity"])
    def test_trace_gradient_matches_finite_differences(self, activation, rng):
        net = init_net([2, 6, 6, 2], Activation(activation), Prng(8))
        x = rng.normal(size=(3, 2))
        weights = np.array([0.5, 1.0, 2.0])

        def weighted_trace(n):
            _, tape = forward(n, x)
            return float(np.sum(weights * np.trace(input_jacobian(n, tape), axis1=1, axis2=2)))

        _, tape = forward(net, x)
        analytic = flatten(trace_jacobian_params(net, tape, weights).params())
        assert rel_error(analytic, numeric_param_grad(net, weighted_trace)) < 1e-4


class TestAdam:
    def test_first_step(self):
        params, state = adam_step([np.zeros(1)], [np.full(1, 2.0)], adam_init([np.zeros(1)], lr=1e-3))
        assert_allclose(params[0], [-1e-3 * 2.0 / (2.0 + 1e-8)], rtol=1e-12)
        assert_allclose(params[0], [-0.000999999995], rtol=1e-9)
        assert state.step_count == 1

    def test_zero_gradient_fixed_point(self):
        theta = [np.array([0.3, -1.2])]
        params, state = adam_step(theta, [np.zeros(2)], adam_init(theta))
        assert_array_equal(params[0], theta[0])
        assert state.step_count == 1

    def test_two_constant_steps(self):
        theta = [np.zeros(1)]
        state = adam_init(theta, lr=0.1, beta1=0.9, beta2=0.999)
        for _ in range(2):
            theta, state = adam_step(theta, [np.ones(1)], state)
        assert_allclose(theta[0], [-0.2], atol=1e-6)

    def test_inputs_untouched(self):
        theta = [np.ones(3)]
        state = adam_init(theta)
        adam_step(theta, [np.ones(3)], state)
        assert_array_equal(theta[0], np.ones(3))
        assert state.step_count == 0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step([np.zeros(2)], [np.zeros(3)], adam_init([np.zeros(2)]))

    def test_bad_hyperparameters(self):
        with pytest.raises(ConfigurationError):
            adam_init([np.zeros(1)], lr=0.0)
        with pytest.raises(ConfigurationError):
            adam_init([np.zeros(1)], beta1=1.0)


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        net = init_net([3, 7, 2], Activation("leaky_relu", 0.2), Prng(9))
        path = save_net(net, tmp_path / "net.npz")
        loaded = load_net(path)
        assert loaded.layer_dims == [3, 7, 2]
        assert loaded.activation == net.activation
        for a, b in zip(net.params(), loaded.params()):
            assert_array_equal(a, b)

    def test_same_net_same_bytes(self, tmp_path):
        net = init_net([2, 4, 2], Activation("gelu"), Prng(1))
        save_net(net, tmp_path / "a.npz")
        save_net(net, tmp_path / "b.npz")
        assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()


class TestPrng:
    def test_reproducible(self):
        assert_array_equal(Prng(5, 2).normal(4), Prng(5, 2).normal(4))

    def test_children_are_independent_streams(self):
        root = Prng(5)
        assert not np.array_equal(root.child(0).normal(4), root.child(1).normal(4))
        assert_array_equal(root.child(3).child(1).normal(4), Prng(5).child(3).child(1).normal(4))

    def test_negative_seed(self):
        with pytest.raises(ValueError):
            Prng(-1)
