# Denoising Fisher training of one-step implicit samplers

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from tqdm.auto import tqdm

from core.dft.trace import TrainTrace
from core.metrics.ksd import CallableSampleSource, KsdEstimator, KsdReport, eval_protocol
from core.nn.adam import AdamState, adam_init, adam_step
from core.nn.net import FeedForwardNet, ForwardTape, NetGrads, backward_params, forward, vjp_input
from core.score.matching import NoiseModel, PerturbedBatch, conditional_score, dsm_step, perturb, sm_step
from core.targets.analytic import TargetDistribution
from core.targets.blr import BlrPosterior, blr_accuracy
from core.utils.errors import ConfigurationError, NumericError
from core.utils.prng import Prng

logger = logging.getLogger(__name__)

GRAD_MODES = ("full", "partial")
SCORE_OBJECTIVES = ("dsm", "sm")


@dataclass(frozen=True)
class DftConfig:
    """
    Hyperparameters of the alternating loop. lambda1 weighs the pathwise
    term (L1), lambda2 the score-parameter term recovered through L2.
    None means the grad_mode default: full -> (1, 1), partial -> (0, 1).
    """

    sigma: float = 0.1
    grad_mode: str = "full"
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    score_steps_per_sampler_step: int = 2
    batch_size: int = 1000
    max_iter: int = 20000
    sampler_lr: float = 1e-4
    score_lr: float = 2e-4
    eval_every: int = 1000
    eval_samples: int = 500
    eval_repeats: int = 20
    score_objective: str = "dsm"
    latent_dim: int = 0

    def __post_init__(self):
        if self.grad_mode not in GRAD_MODES:
            raise ConfigurationError(f"grad_mode must be one of {GRAD_MODES}, got {self.grad_mode!r}")
        if self.score_objective not in SCORE_OBJECTIVES:
            raise ConfigurationError(f"score_objective must be one of {SCORE_OBJECTIVES}")
        if not self.sigma > 0:
            raise ConfigurationError(f"sigma must be positive, got {self.sigma}")
        for name in ("score_steps_per_sampler_step", "batch_size", "eval_every", "eval_samples", "eval_repeats"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.max_iter < 0 or self.latent_dim < 0:
            raise ConfigurationError("max_iter and latent_dim must be non-negative")
        if not (self.sampler_lr > 0 and self.score_lr > 0):
            raise ConfigurationError("learning rates must be positive")

        lambda2 = 1.0 if self.lambda2 is None else float(self.lambda2)
        if self.grad_mode == "partial":
            if self.lambda1:
                logger.warning(f"partial gradient mode ignores lambda1={self.lambda1}")
            lambda1 = 0.0
        else:
            lambda1 = 1.0 if self.lambda1 is None else float(self.lambda1)
        if lambda1 < 0 or lambda2 < 0:
            raise ConfigurationError("loss weights must be non-negative")
        object.__setattr__(self, "lambda1", lambda1)
        object.__setattr__(self, "lambda2", lambda2)

    def latent_for(self, dim: int) -> int:
        return self.latent_dim or 2 * dim


@dataclass
class SurrogateGradient:
    g_x: np.ndarray
    l1: float
    l2: float


def surrogate_gradient(target: TargetDistribution, score_net: FeedForwardNet, batch: PerturbedBatch,
                       config: DftConfig) -> SurrogateGradient:
    """
    x-space cotangent of lambda1 * |s_q - s_phi|^2 + lambda2 * 2 (s_q - s_phi)^T (s_phi - c)
    at x_sigma, with c = -eps / sigma and the score-net parameters held fixed.
    """
    x = batch.x_sigma
    s_q = target.score(x)
    s_phi, tape = forward(score_net, x)
    c = conditional_score(batch)
    residual = s_q - s_phi
    mismatch = s_phi - c

    # g_x = 2 H^T a - 2 J^T b with the lambda-weighted cotangents a, b
    g_x = np.zeros_like(x)
    if config.lambda1 or config.lambda2:
        through_target = config.lambda1 * residual + config.lambda2 * mismatch
        through_net = through_target - config.lambda2 * residual
        g_x = 2.0 * target.score_vjp(x, through_target) - 2.0 * vjp_input(score_net, tape, through_net)
    finite = np.all(np.isfinite(g_x), axis=1)
    if not np.all(finite):
        raise NumericError("non-finite surrogate gradient", index=int(np.flatnonzero(~finite)[0]))
    l1 = float(np.mean(np.sum(residual**2, axis=1)))
    l2 = float(np.mean(2.0 * np.sum(residual * mismatch, axis=1)))
    return SurrogateGradient(g_x, l1, l2)


def sampler_grad(sampler_net: FeedForwardNet, z_batch, g_x, tape: Optional[ForwardTape] = None) -> NetGrads:
    """Pathwise gradient: sigma * eps does not depend on theta, so dx_sigma/dtheta = dg(z)/dtheta."""
    if tape is None:
        _, tape = forward(sampler_net, z_batch)
    g_x = np.atleast_2d(np.asarray(g_x, dtype=np.float64))
    return backward_params(sampler_net, tape, g_x).scaled(1.0 / g_x.shape[0])


def draw_samples(sampler_net: FeedForwardNet, n: int, prng: Prng) -> np.ndarray:
    z = prng.normal((n, sampler_net.input_dim))
    return forward(sampler_net, z)[0]


class KsdCheckpointEvaluator:
    """KSD of fresh sampler draws; lower is better."""

    metric = "ksd"

    def __init__(self, target: TargetDistribution, estimator: KsdEstimator = KsdEstimator(),
                 n_samples: int = 500, n_repeats: int = 20, max_workers: int = 1):
        self.target = target
        self.estimator = estimator
        self.n_samples = n_samples
        self.n_repeats = n_repeats
        self.max_workers = max_workers

    def __call__(self, sampler_net: FeedForwardNet, prng: Prng) -> KsdReport:
        source = CallableSampleSource(lambda n, p: draw_samples(sampler_net, n, p))
        return eval_protocol(self.estimator, self.target, source, self.n_samples, self.n_repeats, prng,
                             self.max_workers)


class BlrErrorEvaluator:
    """Test error (1 - accuracy) of sampler draws on a logistic-regression posterior."""

    metric = "test_error"

    def __init__(self, posterior: BlrPosterior, n_samples: int = 100, n_repeats: int = 1):
        self.posterior = posterior
        self.n_samples = n_samples
        self.n_repeats = n_repeats

    def __call__(self, sampler_net: FeedForwardNet, prng: Prng) -> KsdReport:
        errors = np.array([
            1.0 - blr_accuracy(self.posterior, draw_samples(sampler_net, self.n_samples, prng.child(r)))
            for r in range(self.n_repeats)
        ])
        std = float(errors.std(ddof=1)) if self.n_repeats > 1 else 0.0
        return KsdReport(float(errors.mean()), std, self.n_repeats, self.n_samples, None,
                         single_repeat=self.n_repeats == 1, metric=self.metric)


@dataclass
class TrainResult:
    sampler: FeedForwardNet
    score_net: FeedForwardNet
    best_sampler: FeedForwardNet
    best_score_net: FeedForwardNet
    trace: TrainTrace
    status: str = "completed"
    best_iteration: Optional[int] = None
    best_value: Optional[float] = None
    sampler_state: Optional[AdamState] = None
    score_state: Optional[AdamState] = None

    @property
    def aborted(self) -> bool:
        return self.status == "aborted"


def _check_dims(target, sampler_net, score_net):
    if sampler_net.output_dim != target.dim:
        raise ConfigurationError(f"sampler outputs {sampler_net.output_dim} dims, target has {target.dim}")
    if score_net.input_dim != target.dim or score_net.output_dim != target.dim:
        raise ConfigurationError(f"score network must map R^{target.dim} to R^{target.dim}")


def train_dft(target: TargetDistribution, sampler_net: FeedForwardNet, score_net: FeedForwardNet,
              config: DftConfig, prng: Prng, evaluator=None, progress: bool = False) -> TrainResult:
    """
    Alternate score-network fitting on detached sampler draws with sampler
    updates from the surrogate gradient. Two consecutive non-finite batches
    abort the run; a single one is dropped and recorded.
    """
    _check_dims(target, sampler_net, score_net)
    if evaluator is None:
        evaluator = KsdCheckpointEvaluator(target, n_samples=config.eval_samples, n_repeats=config.eval_repeats)
    noise = NoiseModel(config.sigma)
    sampler_state = adam_init(sampler_net.params(), lr=config.sampler_lr)
    score_state = adam_init(score_net.params(), lr=config.score_lr)
    score_stream, sampler_stream, eval_stream, target_stream = (prng.child(k) for k in range(4))

    trace = TrainTrace()
    best_sampler, best_score_net = sampler_net.copy(), score_net.copy()
    best_value, best_iteration = float("inf"), None
    status = "completed"
    failures = 0
    started = time.perf_counter()
    batch = config.batch_size

    iterations = tqdm(range(config.max_iter), desc="dft", disable=not progress, leave=False)
    for t in iterations:
        step_target = target.minibatch(target_stream.child(t))
        score_before, score_state_before = score_net, score_state
        try:
            # score network on detached sampler draws
            p_score = score_stream.child(t)
            score_loss = 0.0
            for k in range(config.score_steps_per_sampler_step):
                p_k = p_score.child(k)
                x0 = draw_samples(sampler_net, batch, p_k.child(0))
                if config.score_objective == "dsm":
                    score_loss, score_net, score_state = dsm_step(score_net, x0, noise, score_state, p_k.child(1))
                else:
                    x_sigma = perturb(x0, noise, p_k.child(1)).x_sigma
                    score_loss, score_net, score_state = sm_step(score_net, x_sigma, score_state)

            # sampler update on a fresh latent batch
            p_sampler = sampler_stream.child(t)
            z = p_sampler.normal((batch, sampler_net.input_dim))
            x0, tape = forward(sampler_net, z)
            perturbed = perturb(x0, noise, p_sampler.child(0))
            surrogate = surrogate_gradient(step_target, score_net, perturbed, config)
            grads = sampler_grad(sampler_net, z, surrogate.g_x, tape)
            params, sampler_state = adam_step(sampler_net.params(), grads.params(), sampler_state)
            sampler_net = sampler_net.with_params(params)
        except NumericError as exc:
            # a dropped batch leaves both networks as they were
            score_net, score_state = score_before, score_state_before
            failures += 1
            trace.append_event(t, "skipped", str(exc), time.perf_counter() - started)
            logger.warning(f"Iteration {t}: dropped non-finite batch ({exc})")
            if failures >= 2:
                status = "aborted"
                trace.append_event(t + 1, "aborted", "two consecutive non-finite batches",
                                   time.perf_counter() - started)
                logger.error(f"Training aborted at iteration {t}")
                break
            continue
        failures = 0
        trace.append_step(t, surrogate.l1, surrogate.l2, score_loss, time.perf_counter() - started)
        logger.debug(f"iter {t}: L1={surrogate.l1:.5g} L2={surrogate.l2:.5g} score={score_loss:.5g}")

        if (t + 1) % config.eval_every == 0:
            report = evaluator(sampler_net, eval_stream.child(t))
            trace.append_checkpoint(t, evaluator.metric, report.mean, report.std, time.perf_counter() - started)
            logger.info(f"Iteration {t + 1}: {evaluator.metric} {report.mean:.4f} ± {report.std:.4f}")
            if report.mean < best_value:
                best_value, best_iteration = report.mean, t
                best_sampler, best_score_net = sampler_net.copy(), score_net.copy()

    if best_iteration is None:
        best_sampler, best_score_net = sampler_net.copy(), score_net.copy()
        best_value = None
    return TrainResult(sampler_net, score_net, best_sampler, best_score_net, trace, status,
                       best_iteration, best_value, sampler_state, score_state)
