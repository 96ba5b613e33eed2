# Dense feed-forward networks with explicit reverse-mode passes

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from core.utils.errors import ConfigurationError, NumericError, ShapeError, StateError
from core.utils.prng import Prng

ACTIVATIONS = ("elu", "leaky_relu", "gelu", "identity")

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


@dataclass(frozen=True)
class Activation:
    name: str = "elu"
    slope: float = 0.2  # leaky_relu only

    def __post_init__(self):
        if self.name not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.name!r}, expected one of {ACTIVATIONS}")

    def value(self, z):
        if self.name == "elu":
            return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))
        if self.name == "leaky_relu":
            return np.where(z > 0, z, self.slope * z)
        if self.name == "gelu":
            u = _GELU_C * (z + _GELU_A * z**3)
            return 0.5 * z * (1.0 + np.tanh(u))
        return z

    def derivative(self, z):
        if self.name == "elu":
            return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))
        if self.name == "leaky_relu":
            return np.where(z > 0, 1.0, self.slope)
        if self.name == "gelu":
            u = _GELU_C * (z + _GELU_A * z**3)
            t = np.tanh(u)
            du = _GELU_C * (1.0 + 3.0 * _GELU_A * z**2)
            return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t**2) * du
        return np.ones_like(z)

    def second_derivative(self, z):
        if self.name == "elu":
            return np.where(z > 0, 0.0, np.exp(np.minimum(z, 0.0)))
        if self.name == "gelu":
            u = _GELU_C * (z + _GELU_A * z**3)
            t = np.tanh(u)
            sech2 = 1.0 - t**2
            du = _GELU_C * (1.0 + 3.0 * _GELU_A * z**2)
            d2u = _GELU_C * 6.0 * _GELU_A * z
            return sech2 * du + 0.5 * z * (-2.0 * t * sech2 * du**2 + sech2 * d2u)
        return np.zeros_like(z)


@dataclass
class FeedForwardNet:
    """
    Multilayer perceptron. Hidden layers share one activation, the output
    layer is affine. weights[i] has shape (layer_dims[i+1], layer_dims[i]).
    """

    layer_dims: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: Activation = field(default_factory=Activation)

    def __post_init__(self):
        _check_dims(self.layer_dims)
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("one weight matrix and one bias vector per layer expected")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[i + 1], self.layer_dims[i]):
                raise ShapeError(f"weight {i} has shape {w.shape}")
            if b.shape != (self.layer_dims[i + 1],):
                raise ShapeError(f"bias {i} has shape {b.shape}")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> List[np.ndarray]:
        """Parameters in fixed order W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def with_params(self, params: List[np.ndarray]) -> "FeedForwardNet":
        return FeedForwardNet(
            list(self.layer_dims),
            [np.array(p, dtype=np.float64) for p in params[0::2]],
            [np.array(p, dtype=np.float64) for p in params[1::2]],
            self.activation,
        )

    def copy(self) -> "FeedForwardNet":
        return self.with_params(self.params())

    def n_params(self) -> int:
        return sum(p.size for p in self.params())


@dataclass
class ForwardTape:
    """Per-layer inputs and pre-activations recorded by forward()."""

    net: FeedForwardNet
    inputs: List[np.ndarray]
    preacts: List[np.ndarray]

    @property
    def batch_size(self) -> int:
        return self.inputs[0].shape[0]


@dataclass
class NetGrads:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def params(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def scaled(self, factor: float) -> "NetGrads":
        return NetGrads([w * factor for w in self.weights], [b * factor for b in self.biases])

    def __add__(self, other: "NetGrads") -> "NetGrads":
        return NetGrads(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(p**2) for p in self.params())))


def _check_dims(layer_dims):
    if len(layer_dims) < 2:
        raise ConfigurationError(f"layer_dims needs at least input and output sizes, got {layer_dims}")
    if any(int(d) <= 0 for d in layer_dims):
        raise ConfigurationError(f"layer sizes must be positive, got {layer_dims}")


def init_net(layer_dims, activation: Activation, prng: Prng) -> FeedForwardNet:
    """Gaussian weights with std sqrt(2 / fan_in), zero biases."""
    _check_dims(layer_dims)
    dims = [int(d) for d in layer_dims]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(prng.normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return FeedForwardNet(dims, weights, biases, activation)


def forward(net: FeedForwardNet, x_batch) -> Tuple[np.ndarray, ForwardTape]:
    x = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    if x.shape[1] != net.input_dim:
        raise ShapeError(f"expected {net.input_dim} input columns, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        bad = int(np.argwhere(~np.isfinite(x))[0, 0])
        raise NumericError("non-finite network input", index=bad)
    inputs, preacts = [], []
    a = x
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(a)
        z = a @ w.T + b
        preacts.append(z)
        a = z if i == last else net.activation.value(z)
    return a, ForwardTape(net, inputs, preacts)


def _check_tape(net: FeedForwardNet, tape: ForwardTape, cotangent) -> np.ndarray:
    if tape.net is not net:
        raise StateError("tape was recorded on a different network")
    v = np.atleast_2d(np.asarray(cotangent, dtype=np.float64))
    if v.shape != (tape.batch_size, net.output_dim):
        raise ShapeError(f"cotangent shape {v.shape} does not match outputs ({tape.batch_size}, {net.output_dim})")
    return v


def _reverse(net, tape, v, injections=None, need_params=True):
    """Shared reverse sweep; injections add extra adjoints onto pre-activations."""
    grad_w = [None] * net.n_layers
    grad_b = [None] * net.n_layers
    dz = v
    for i in reversed(range(net.n_layers)):
        if injections is not None:
            dz = dz + injections[i]
        if need_params:
            grad_w[i] = dz.T @ tape.inputs[i]
            grad_b[i] = dz.sum(axis=0)
        da = dz @ net.weights[i]
        if i > 0:
            dz = da * net.activation.derivative(tape.preacts[i - 1])
    return NetGrads(grad_w, grad_b), da


def backward_params(net: FeedForwardNet, tape: ForwardTape, cotangent_batch) -> NetGrads:
    """Gradient of sum_rows <cotangent, output> with respect to the parameters."""
    v = _check_tape(net, tape, cotangent_batch)
    grads, _ = _reverse(net, tape, v)
    return grads


def vjp_input(net: FeedForwardNet, tape: ForwardTape, cotangent_batch) -> np.ndarray:
    """Row i is cotangent_i^T J(x_i)."""
    v = _check_tape(net, tape, cotangent_batch)
    _, dx = _reverse(net, tape, v, need_params=False)
    return dx


def _tangents(net, tape):
    """Forward-mode tangents for every input basis direction, shape (D_in, n, width)."""
    n = tape.batch_size
    d_in = net.input_dim
    a_dot = np.broadcast_to(np.eye(d_in)[:, None, :], (d_in, n, d_in))
    a_dots, z_dots = [], []
    for i, w in enumerate(net.weights):
        a_dots.append(a_dot)
        z_dot = a_dot @ w.T
        z_dots.append(z_dot)
        if i < net.n_layers - 1:
            a_dot = net.activation.derivative(tape.preacts[i])[None] * z_dot
    return a_dots, z_dots


def input_jacobian(net: FeedForwardNet, tape: ForwardTape) -> np.ndarray:
    """Dense Jacobian per row, shape (n, D_out, D_in)."""
    _, z_dots = _tangents(net, tape)
    return np.transpose(z_dots[-1], (1, 2, 0))


def trace_jacobian_params(net: FeedForwardNet, tape: ForwardTape, row_weights) -> NetGrads:
    """
    Gradient with respect to the parameters of sum_i w_i * trace(J(x_i)).

    Requires a square Jacobian. The pass differentiates the forward tangents,
    so activation second derivatives feed back into the primal adjoints.
    """
    if tape.net is not net:
        raise StateError("tape was recorded on a different network")
    if net.input_dim != net.output_dim:
        raise ShapeError("trace of the Jacobian needs equal input and output dims")
    w_rows = np.asarray(row_weights, dtype=np.float64).reshape(-1)
    n, d = tape.batch_size, net.input_dim
    a_dots, z_dots = _tangents(net, tape)

    grad_w = [np.zeros_like(w) for w in net.weights]
    injections = [np.zeros_like(z) for z in tape.preacts]
    # adjoint of the output tangent for direction j is w_rows on column j
    z_dot_bar = np.zeros((d, n, d))
    z_dot_bar[np.arange(d), :, np.arange(d)] = w_rows[None, :]
    for i in reversed(range(net.n_layers)):
        grad_w[i] += np.einsum("jno,jni->oi", z_dot_bar, a_dots[i])
        a_dot_bar = z_dot_bar @ net.weights[i]
        if i > 0:
            z_prev = tape.preacts[i - 1]
            injections[i - 1] += np.einsum(
                "jnh,jnh->nh", z_dots[i - 1] * net.activation.second_derivative(z_prev)[None], a_dot_bar
            )
            z_dot_bar = net.activation.derivative(z_prev)[None] * a_dot_bar

    primal, _ = _reverse(net, tape, np.zeros((n, net.output_dim)), injections)
    return NetGrads([g + p for g, p in zip(grad_w, primal.weights)], primal.biases)


def flatten(params: List[np.ndarray]) -> np.ndarray:
    return np.concatenate([p.reshape(-1) for p in params])


def unflatten(vector: np.ndarray, like: List[np.ndarray]) -> List[np.ndarray]:
    out, offset = [], 0
    for p in like:
        out.append(np.asarray(vector[offset:offset + p.size], dtype=np.float64).reshape(p.shape))
        offset += p.size
    return out


def linear_net(matrix, bias) -> FeedForwardNet:
    """Single affine layer x -> matrix @ x + bias."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    bias = np.asarray(bias, dtype=np.float64).reshape(-1)
    return FeedForwardNet([matrix.shape[1], matrix.shape[0]], [matrix.copy()], [bias.copy()], Activation("identity"))