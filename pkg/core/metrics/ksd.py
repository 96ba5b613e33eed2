# Kernelized Stein discrepancy with the inverse multiquadric kernel

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from core.targets.analytic import TargetDistribution, as_batch
from core.utils.errors import ConfigurationError, SourceExhaustedError
from core.utils.prng import Prng

logger = logging.getLogger(__name__)

STATISTICS = ("u_statistic", "v_statistic")


@dataclass(frozen=True)
class KsdEstimator:
    """IMQ kernel k(x, y) = (c^2 + |x - y|^2)^beta and the estimator flavour."""

    c: float = 1.0
    beta: float = -0.5
    statistic: str = "u_statistic"

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigurationError(f"IMQ offset c must be positive, got {self.c}")
        if not -1.0 < self.beta < 0.0:
            raise ConfigurationError(f"IMQ exponent beta must lie in (-1, 0), got {self.beta}")
        if self.statistic not in STATISTICS:
            raise ConfigurationError(f"statistic must be one of {STATISTICS}, got {self.statistic!r}")


@dataclass
class KsdReport:
    mean: float
    std: float
    n_repeats: int
    n_samples_per_repeat: int
    estimator: Optional[KsdEstimator]
    single_repeat: bool = False
    clipped: int = 0
    metric: str = "ksd"

    def to_json(self) -> dict:
        """Kernel fields are present only for KSD reports."""
        out = {
            "metric": self.metric,
            "mean": self.mean,
            "std": self.std,
            "n_samples": self.n_samples_per_repeat,
            "n_repeats": self.n_repeats,
        }
        if self.estimator is not None:
            out["kernel"] = {"c": self.estimator.c, "beta": self.estimator.beta}
            out["statistic"] = self.estimator.statistic
        out["single_repeat"] = self.single_repeat
        out["clipped"] = self.clipped
        return out


def stein_matrix(estimator: KsdEstimator, x: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Matrix u_p(x_i, x_j) from points and their target scores."""
    n, d = x.shape
    c2, beta = estimator.c**2, estimator.beta
    diff = x[:, None, :] - x[None, :, :]
    r2 = np.sum(diff**2, axis=2)
    base = c2 + r2
    k = base**beta
    # grad_x k(x_i, x_j); grad_y k is its negative
    grad_x = 2.0 * beta * (base ** (beta - 1.0))[:, :, None] * diff
    trace = -2.0 * beta * ((2.0 * beta + d - 2.0) * r2 + d * c2) * base ** (beta - 2.0)
    score_dot = scores @ scores.T
    sx_grad_y = -np.einsum("id,ijd->ij", scores, grad_x)
    sy_grad_x = np.einsum("jd,ijd->ij", scores, grad_x)
    return score_dot * k + sx_grad_y + sy_grad_x + trace


def stein_kernel(estimator: KsdEstimator, target: TargetDistribution, x, y) -> float:
    points = np.vstack([as_batch(x, target.dim), as_batch(y, target.dim)])
    return float(stein_matrix(estimator, points, target.score(points))[0, 1])


def ksd_squared(estimator: KsdEstimator, target: TargetDistribution, samples) -> float:
    """Signed quadratic form before clipping."""
    x = as_batch(samples, target.dim)
    n = x.shape[0]
    if estimator.statistic == "u_statistic":
        if n < 2:
            raise ConfigurationError("the U-statistic needs at least 2 samples")
        u = stein_matrix(estimator, x, target.score(x))
        return float((u.sum() - np.trace(u)) / (n * (n - 1)))
    if n < 1:
        raise ConfigurationError("the V-statistic needs at least 1 sample")
    u = stein_matrix(estimator, x, target.score(x))
    return float(u.sum() / n**2)


def ksd(estimator: KsdEstimator, target: TargetDistribution, samples) -> float:
    return float(np.sqrt(max(0.0, ksd_squared(estimator, target, samples))))


class SampleSource(Protocol):
    available: Optional[int]

    def draw(self, n: int, prng: Prng, repeat: int) -> np.ndarray: ...


class ArraySampleSource:
    """Fixed points served in disjoint consecutive chunks, one per repeat."""

    def __init__(self, points):
        self.points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        self.available = self.points.shape[0]

    def draw(self, n, prng, repeat):
        start = repeat * n
        if start + n > self.available:
            raise SourceExhaustedError(start + n, self.available)
        return self.points[start:start + n]


class CallableSampleSource:
    """Unlimited source backed by a function (n, prng) -> points."""

    available = None

    def __init__(self, fn):
        self.fn = fn

    def draw(self, n, prng, repeat):
        return self.fn(n, prng)


def eval_protocol(estimator: KsdEstimator, target: TargetDistribution, sample_source: SampleSource,
                  n_samples: int = 500, n_repeats: int = 20, prng: Optional[Prng] = None,
                  max_workers: int = 1) -> KsdReport:
    """Mean and sample std of KSD over independent fresh batches."""
    if n_samples < 1 or n_repeats < 1:
        raise ConfigurationError("n_samples and n_repeats must be positive")
    needed = n_samples * n_repeats
    available = getattr(sample_source, "available", None)
    if available is not None and available < needed:
        raise SourceExhaustedError(needed, available)
    prng = prng or Prng(0)

    def one(repeat):
        points = sample_source.draw(n_samples, prng.child(repeat), repeat)
        return ksd_squared(estimator, target, points)

    if max_workers > 1 and n_repeats > 1:
        with ThreadPoolExecutor(max_workers=min(max_workers, n_repeats)) as pool:
            squared = list(pool.map(one, range(n_repeats)))
    else:
        squared = [one(r) for r in range(n_repeats)]

    values = np.sqrt(np.maximum(0.0, squared))
    clipped = int(np.sum(np.asarray(squared) < 0.0))
    if clipped:
        logger.debug(f"{clipped} of {n_repeats} KSD estimates clipped at zero")
    std = float(values.std(ddof=1)) if n_repeats > 1 else 0.0
    return KsdReport(float(values.mean()), std, n_repeats, n_samples, estimator,
                     single_repeat=n_repeats == 1, clipped=clipped)
