# Langevin and Hamiltonian Monte Carlo particle baselines

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from tqdm.auto import tqdm

from core.targets.analytic import TargetDistribution
from core.utils.errors import ConfigurationError
from core.utils.prng import Prng

logger = logging.getLogger(__name__)

INIT_MODES = ("standard_normal", "provided")


@dataclass(frozen=True)
class ChainConfig:
    """
    Particle-run settings. Every particle is an independent chain; n_steps
    may be 0, in which case the initial points are returned.
    """

    n_particles: int = 500
    n_steps: int = 500
    step_size: float = 0.01
    hmc_leapfrog_steps: int = 5
    init: str = "standard_normal"
    init_points: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.n_particles < 1:
            raise ConfigurationError(f"n_particles must be positive, got {self.n_particles}")
        if self.n_steps < 0:
            raise ConfigurationError(f"n_steps must be non-negative, got {self.n_steps}")
        if not (np.isfinite(self.step_size) and self.step_size > 0):
            raise ConfigurationError(f"step_size must be finite and positive, got {self.step_size}")
        if self.hmc_leapfrog_steps < 0:
            raise ConfigurationError("hmc_leapfrog_steps must be non-negative")
        if self.init not in INIT_MODES:
            raise ConfigurationError(f"init must be one of {INIT_MODES}, got {self.init!r}")
        if self.init == "provided" and self.init_points is None:
            raise ConfigurationError("init=provided needs init_points")


@dataclass
class SampleBatch:
    """n points in R^D with their provenance."""

    points: np.ndarray
    sampler_id: str
    iteration: int
    seed: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def initial_points(target: TargetDistribution, config: ChainConfig, prng: Prng) -> np.ndarray:
    if config.init == "standard_normal":
        return prng.normal((config.n_particles, target.dim))
    points = np.atleast_2d(np.asarray(config.init_points, dtype=np.float64))
    if points.shape != (config.n_particles, target.dim):
        raise ConfigurationError(f"init_points must have shape ({config.n_particles}, {target.dim}), "
                                 f"got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise ConfigurationError("init_points contain non-finite values")
    return points.copy()


def langevin_step(target: TargetDistribution, x, step_size: float, noise) -> np.ndarray:
    """x + step_size * s_q(x) + sqrt(2 step_size) * noise."""
    with np.errstate(over="ignore", invalid="ignore"):
        return x + step_size * target.score(x) + np.sqrt(2.0 * step_size) * noise


def langevin_run(target: TargetDistribution, config: ChainConfig, prng: Prng, progress: bool = False) -> SampleBatch:
    """Unadjusted Langevin; particles that leave the finite range restart from N(0, I)."""
    x = initial_points(target, config, prng.child(0))
    steps = prng.child(1)
    reinitialized = 0
    for t in tqdm(range(config.n_steps), desc="langevin", disable=not progress, leave=False):
        p = steps.child(t)
        x = langevin_step(target, x, config.step_size, p.normal(x.shape))
        bad = ~np.all(np.isfinite(x), axis=1)
        if bad.any():
            count = int(bad.sum())
            x[bad] = p.child(0).normal((count, target.dim))
            reinitialized += count
            logger.warning(f"Langevin step {t}: re-initialized {count} non-finite particles")
    return SampleBatch(x, "langevin", config.n_steps, prng.seed, {"reinitialized": reinitialized})


def acceptance_probability(delta_h) -> np.ndarray:
    """min(1, exp(-delta_h)); non-finite energy changes are never accepted."""
    delta_h = np.asarray(delta_h, dtype=np.float64)
    with np.errstate(over="ignore"):
        prob = np.minimum(1.0, np.exp(-delta_h))
    return np.where(np.isfinite(delta_h), prob, 0.0)


def leapfrog(target: TargetDistribution, x, p, step_size: float, n_steps: int):
    """Identity-mass leapfrog integration of H = -log q(x) + |p|^2 / 2."""
    with np.errstate(over="ignore", invalid="ignore"):
        p = p + 0.5 * step_size * target.score(x)
        for l in range(n_steps):
            x = x + step_size * p
            if l < n_steps - 1:
                p = p + step_size * target.score(x)
        p = p + 0.5 * step_size * target.score(x)
    return x, p


def hamiltonian(target: TargetDistribution, x, p) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        return -target.log_density(x) + 0.5 * np.sum(p**2, axis=1)


def hmc_run(target: TargetDistribution, config: ChainConfig, prng: Prng, progress: bool = False) -> SampleBatch:
    if config.hmc_leapfrog_steps < 1:
        raise ConfigurationError("HMC needs at least one leapfrog step")
    x = initial_points(target, config, prng.child(0))
    steps = prng.child(1)
    accepted = 0
    rejected_nonfinite = 0
    for t in tqdm(range(config.n_steps), desc="hmc", disable=not progress, leave=False):
        p_t = steps.child(t)
        momentum = p_t.normal(x.shape)
        x_new, p_new = leapfrog(target, x, momentum, config.step_size, config.hmc_leapfrog_steps)
        finite = np.all(np.isfinite(x_new), axis=1) & np.all(np.isfinite(p_new), axis=1)
        delta_h = np.full(x.shape[0], np.inf)
        if finite.any():
            delta_h[finite] = (hamiltonian(target, x_new[finite], p_new[finite])
                               - hamiltonian(target, x[finite], momentum[finite]))
        rejected_nonfinite += int(np.sum(~finite | ~np.isfinite(delta_h)))
        accept = p_t.child(0).uniform(x.shape[0]) < acceptance_probability(delta_h)
        x = np.where(accept[:, None], x_new, x)
        accepted += int(accept.sum())

    proposals = config.n_steps * config.n_particles
    rate = accepted / proposals if proposals else 0.0
    if rejected_nonfinite:
        logger.warning(f"HMC rejected {rejected_nonfinite} non-finite proposals")
    logger.debug(f"HMC acceptance rate {rate:.3f}")
    return SampleBatch(x, "hmc", config.n_steps, prng.seed,
                       {"acceptance_rate": rate, "rejected_nonfinite": rejected_nonfinite})
