# Stein variational gradient descent with a median-trick RBF kernel

import logging

import numpy as np
from tqdm.auto import tqdm

from core.baselines.chains import ChainConfig, SampleBatch, initial_points
from core.targets.analytic import TargetDistribution
from core.utils.errors import ConfigurationError
from core.utils.prng import Prng

logger = logging.getLogger(__name__)

BANDWIDTH_FLOOR = 1e-6


def _squared_distances(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return np.sum(diff**2, axis=2)


def median_bandwidth(points) -> float:
    """Lower median of the pairwise squared distances over log(n + 1)."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise ConfigurationError(f"the median trick needs at least 2 points, got {n}")
    upper = np.sort(_squared_distances(x)[np.triu_indices(n, k=1)])
    return float(upper[(upper.size - 1) // 2] / np.log(n + 1))


def svgd_direction(x: np.ndarray, scores: np.ndarray, h: float) -> np.ndarray:
    """mean_j [k(x_j, x_i) s(x_j) + grad_{x_j} k(x_j, x_i)] for k = exp(-|x - y|^2 / h)."""
    diff = x[:, None, :] - x[None, :, :]
    k = np.exp(-np.sum(diff**2, axis=2) / h)
    repulsion = (2.0 / h) * np.einsum("ij,ijd->id", k, diff)
    return (k @ scores + repulsion) / x.shape[0]


def svgd_step(target: TargetDistribution, x: np.ndarray, step_size: float):
    """One synchronous sweep; returns (new points, bandwidth, floored)."""
    h = median_bandwidth(x) if x.shape[0] >= 2 else 0.0
    floored = h < BANDWIDTH_FLOOR
    h = max(h, BANDWIDTH_FLOOR)
    return x + step_size * svgd_direction(x, target.score(x), h), h, floored


def svgd_run(target: TargetDistribution, config: ChainConfig, prng: Prng, progress: bool = False) -> SampleBatch:
    x = initial_points(target, config, prng.child(0))
    floored_steps = 0
    h = BANDWIDTH_FLOOR
    for _ in tqdm(range(config.n_steps), desc="svgd", disable=not progress, leave=False):
        x, h, floored = svgd_step(target, x, config.step_size)
        floored_steps += int(floored)
    if floored_steps:
        logger.warning(f"SVGD bandwidth floored at {BANDWIDTH_FLOOR} on {floored_steps} steps")
    return SampleBatch(x, "svgd", config.n_steps, prng.seed,
                       {"bandwidth": h, "floored_steps": floored_steps})
