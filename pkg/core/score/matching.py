# Score-network objectives: denoising and exact standard score matching

from dataclasses import dataclass

import numpy as np

from core.nn.adam import AdamState, adam_step
from core.nn.net import FeedForwardNet, NetGrads, backward_params, forward, trace_jacobian_params, vjp_input
from core.utils.errors import ConfigurationError, NumericError, UnsupportedConfigurationError
from core.utils.prng import Prng

# exact divergence costs one input-VJP per dimension
MAX_EXACT_DIVERGENCE_DIM = 8


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.1

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigurationError(f"noise sigma must be positive, got {self.sigma}")


@dataclass
class PerturbedBatch:
    x0: np.ndarray
    eps: np.ndarray
    x_sigma: np.ndarray
    sigma: float


def perturb_with(x0, eps, sigma: float) -> PerturbedBatch:
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    eps = np.asarray(eps, dtype=np.float64).reshape(x0.shape)
    return PerturbedBatch(x0, eps, x0 + sigma * eps, float(sigma))


def perturb(x0_batch, noise_model: NoiseModel, prng: Prng) -> PerturbedBatch:
    x0 = np.atleast_2d(np.asarray(x0_batch, dtype=np.float64))
    return perturb_with(x0, prng.normal(x0.shape), noise_model.sigma)


def conditional_score(batch: PerturbedBatch) -> np.ndarray:
    """Score of N(x_sigma; x0, sigma^2 I) in x_sigma, i.e. -eps / sigma."""
    return -batch.eps / batch.sigma


def _first_bad_row(values) -> int:
    return int(np.flatnonzero(~np.isfinite(values))[0])


def dsm_loss_and_grad(score_net: FeedForwardNet, batch: PerturbedBatch):
    """Batch mean of |s_phi(x_sigma) - conditional score|^2 and its parameter gradient."""
    out, tape = forward(score_net, batch.x_sigma)
    residual = out - conditional_score(batch)
    per_row = np.sum(residual**2, axis=1)
    if not np.all(np.isfinite(per_row)):
        raise NumericError("non-finite denoising score-matching loss", index=_first_bad_row(per_row))
    n = residual.shape[0]
    grads = backward_params(score_net, tape, 2.0 * residual / n)
    return float(per_row.mean()), grads


def dsm_step(score_net: FeedForwardNet, x0_batch, noise_model: NoiseModel, adam_state: AdamState, prng: Prng):
    """One Adam step on the DSM loss; returns (pre-step loss, net, state)."""
    batch = perturb(x0_batch, noise_model, prng)
    loss, grads = dsm_loss_and_grad(score_net, batch)
    params, state = adam_step(score_net.params(), grads.params(), adam_state)
    return loss, score_net.with_params(params), state


def _exact_divergence(score_net, tape, n, d):
    div = np.zeros(n)
    for j in range(d):
        unit = np.zeros((n, d))
        unit[:, j] = 1.0
        div += vjp_input(score_net, tape, unit)[:, j]
    return div


def _check_sm_dim(score_net: FeedForwardNet):
    if score_net.input_dim > MAX_EXACT_DIVERGENCE_DIM:
        raise UnsupportedConfigurationError(
            f"exact score matching supports dimension <= {MAX_EXACT_DIVERGENCE_DIM}, "
            f"got {score_net.input_dim}; use denoising score matching (dsm_step) instead"
        )


def sm_loss(score_net: FeedForwardNet, x_batch) -> float:
    """Batch mean of |s_phi(x)|^2 + 2 div s_phi(x) with the exact divergence."""
    _check_sm_dim(score_net)
    out, tape = forward(score_net, x_batch)
    n, d = out.shape
    per_row = np.sum(out**2, axis=1) + 2.0 * _exact_divergence(score_net, tape, n, d)
    return float(per_row.mean())


def sm_loss_and_grad(score_net: FeedForwardNet, x_batch):
    _check_sm_dim(score_net)
    out, tape = forward(score_net, x_batch)
    n, d = out.shape
    per_row = np.sum(out**2, axis=1) + 2.0 * _exact_divergence(score_net, tape, n, d)
    if not np.all(np.isfinite(per_row)):
        raise NumericError("non-finite score-matching loss", index=_first_bad_row(per_row))
    grads: NetGrads = backward_params(score_net, tape, 2.0 * out / n) + trace_jacobian_params(
        score_net, tape, np.full(n, 2.0 / n)
    )
    return float(per_row.mean()), grads


def sm_step(score_net: FeedForwardNet, x_batch, adam_state: AdamState):
    loss, grads = sm_loss_and_grad(score_net, x_batch)
    params, state = adam_step(score_net.params(), grads.params(), adam_state)
    return loss, score_net.with_params(params), state
