# Un-normalized analytic target densities

import numpy as np
from scipy.special import logsumexp

from core.utils.errors import ConfigurationError, NumericError, ShapeError

TARGET_NAMES = ("gaussian", "mog2", "rosenbrock", "donut", "funnel", "squiggle")


def as_batch(x, dim: int) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != dim:
        raise ShapeError(f"expected points of dimension {dim}, got {x.shape[1]}")
    return x


class TargetDistribution:
    """
    Un-normalized log-density with its score and score-VJP.

    Subclasses implement _log_density and _score on (n, dim) batches and may
    implement _hessian or _vjp; without either, score_vjp falls back to central finite
    differences of the score.
    """

    name = "target"
    bounds = (-4.0, 4.0, -4.0, 4.0)

    def __init__(self, dim: int, log_offset: float = 0.0):
        self.dim = int(dim)
        self.log_offset = float(log_offset)

    def log_density(self, x) -> np.ndarray:
        return self._log_density(as_batch(x, self.dim)) + self.log_offset

    def score(self, x) -> np.ndarray:
        return self._score(as_batch(x, self.dim))

    def score_vjp(self, x, v) -> np.ndarray:
        """Row-wise v^T H(x), H the Hessian of log_density."""
        x = as_batch(x, self.dim)
        v = as_batch(v, self.dim)
        if v.shape != x.shape:
            raise ShapeError(f"vector batch {v.shape} does not match points {x.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            bad = int(np.argwhere(~(np.isfinite(x) & np.isfinite(v)))[0, 0])
            raise NumericError("non-finite input to score_vjp", index=bad)
        out = self._vjp(x, v)
        if out is not None:
            return out
        hessian = self._hessian(x)
        if hessian is None:
            return self.finite_difference_vjp(x, v)
        return np.einsum("ni,nij->nj", v, hessian)

    def finite_difference_vjp(self, x, v) -> np.ndarray:
        """Central differences of the score along each axis, h = 1e-5 (1 + |x|)."""
        h = 1e-5 * (1.0 + np.linalg.norm(x, axis=1))
        out = np.zeros_like(x)
        for j in range(self.dim):
            step = np.zeros_like(x)
            step[:, j] = h
            column = (self._score(x + step) - self._score(x - step)) / (2.0 * h[:, None])
            # column[:, i] = H_ij, and H is symmetric
            out[:, j] = np.sum(v * column, axis=1)
        return out

    def minibatch(self, prng) -> "TargetDistribution":
        """Target to use for one stochastic iteration; analytic targets are deterministic."""
        return self

    def _log_density(self, x):
        raise NotImplementedError

    def _score(self, x):
        raise NotImplementedError

    def _hessian(self, x):
        return None

    def _vjp(self, x, v):
        return None

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class GaussianTarget(TargetDistribution):
    """log q = -(x - m)^T P (x - m) / 2 with P the inverse covariance."""

    name = "gaussian"

    def __init__(self, mean, cov, log_offset: float = 0.0):
        mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        super().__init__(mean.size, log_offset)
        self.mean = mean
        self.cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        self.precision = np.linalg.inv(self.cov)

    def _log_density(self, x):
        d = x - self.mean
        return -0.5 * np.einsum("ni,ij,nj->n", d, self.precision, d)

    def _score(self, x):
        return -(x - self.mean) @ self.precision

    def _hessian(self, x):
        return np.broadcast_to(-self.precision, (x.shape[0], self.dim, self.dim))


class Mog2Target(TargetDistribution):
    """Equal mixture of unit Gaussians at +mu and -mu."""

    name = "mog2"
    bounds = (-5.0, 5.0, -4.0, 4.0)

    def __init__(self, mu=(2.0, 0.0), log_offset: float = 0.0):
        super().__init__(2, log_offset)
        self.mu = np.asarray(mu, dtype=np.float64)

    def _log_density(self, x):
        a = -0.5 * np.sum((x - self.mu) ** 2, axis=1)
        b = -0.5 * np.sum((x + self.mu) ** 2, axis=1)
        return logsumexp(np.stack([a, b]), axis=0)

    def _score(self, x):
        t = np.tanh(x @ self.mu)
        return -x + t[:, None] * self.mu

    def _hessian(self, x):
        t = np.tanh(x @ self.mu)
        outer = np.outer(self.mu, self.mu)
        return -np.eye(2)[None] + (1.0 - t**2)[:, None, None] * outer[None]


class RosenbrockTarget(TargetDistribution):
    """Banana: log q = -[x1^2 / 10 + (x2 - x1^2 + 2)^2] / 2."""

    name = "rosenbrock"
    bounds = (-6.0, 6.0, -4.0, 12.0)

    def __init__(self, log_offset: float = 0.0):
        super().__init__(2, log_offset)

    def _log_density(self, x):
        r = x[:, 1] - x[:, 0] ** 2 + 2.0
        return -0.5 * (x[:, 0] ** 2 / 10.0 + r**2)

    def _score(self, x):
        x1 = x[:, 0]
        r = x[:, 1] - x1**2 + 2.0
        return np.stack([-x1 / 10.0 + 2.0 * x1 * r, -r], axis=1)

    def _hessian(self, x):
        x1 = x[:, 0]
        r = x[:, 1] - x1**2 + 2.0
        h = np.empty((x.shape[0], 2, 2))
        h[:, 0, 0] = -0.1 + 2.0 * r - 4.0 * x1**2
        h[:, 0, 1] = h[:, 1, 0] = 2.0 * x1
        h[:, 1, 1] = -1.0
        return h


class DonutTarget(TargetDistribution):
    """Ring: log q = -(|x| - radius)^2 / (2 * variance)."""

    name = "donut"

    def __init__(self, radius: float = 2.6, variance: float = 0.033, log_offset: float = 0.0):
        super().__init__(2, log_offset)
        self.radius = radius
        self.variance = variance

    def _norm(self, x):
        return np.maximum(np.linalg.norm(x, axis=1), 1e-12)

    def _log_density(self, x):
        return -((np.linalg.norm(x, axis=1) - self.radius) ** 2) / (2.0 * self.variance)

    def _score(self, x):
        rho = self._norm(x)
        return -((rho - self.radius) / (self.variance * rho))[:, None] * x

    def _hessian(self, x):
        rho = self._norm(x)
        u = x / rho[:, None]
        radial = np.einsum("ni,nj->nij", u, u)
        tangential = np.eye(2)[None] - radial
        ratio = ((rho - self.radius) / rho)[:, None, None]
        return -(radial + ratio * tangential) / self.variance


class FunnelTarget(TargetDistribution):
    """Neal's funnel: x1 ~ N(0, 3^2), x2 | x1 ~ N(0, exp(x1))."""

    name = "funnel"
    bounds = (-8.0, 8.0, -8.0, 8.0)

    def __init__(self, scale: float = 3.0, log_offset: float = 0.0):
        super().__init__(2, log_offset)
        self.scale = scale

    def _log_density(self, x):
        x1, x2 = x[:, 0], x[:, 1]
        return -(x1**2) / (2.0 * self.scale**2) - x2**2 / (2.0 * np.exp(x1)) - x1 / 2.0

    def _score(self, x):
        x1, x2 = x[:, 0], x[:, 1]
        e = np.exp(-x1)
        return np.stack([-x1 / self.scale**2 + 0.5 * x2**2 * e - 0.5, -x2 * e], axis=1)

    def _hessian(self, x):
        x1, x2 = x[:, 0], x[:, 1]
        e = np.exp(-x1)
        h = np.empty((x.shape[0], 2, 2))
        h[:, 0, 0] = -1.0 / self.scale**2 - 0.5 * x2**2 * e
        h[:, 0, 1] = h[:, 1, 0] = x2 * e
        h[:, 1, 1] = -e
        return h


class SquiggleTarget(TargetDistribution):
    """log q = -x1^2 / 4 - (x2 - sin(2 x1))^2 / (2 * 0.3^2)."""

    name = "squiggle"
    bounds = (-6.0, 6.0, -3.0, 3.0)

    def __init__(self, width: float = 0.3, log_offset: float = 0.0):
        super().__init__(2, log_offset)
        self.k = 1.0 / width**2

    def _log_density(self, x):
        u = x[:, 1] - np.sin(2.0 * x[:, 0])
        return -(x[:, 0] ** 2) / 4.0 - 0.5 * self.k * u**2

    def _score(self, x):
        x1 = x[:, 0]
        u = x[:, 1] - np.sin(2.0 * x1)
        return np.stack([-x1 / 2.0 + 2.0 * self.k * u * np.cos(2.0 * x1), -self.k * u], axis=1)

    def _hessian(self, x):
        x1 = x[:, 0]
        u = x[:, 1] - np.sin(2.0 * x1)
        c, s = np.cos(2.0 * x1), np.sin(2.0 * x1)
        h = np.empty((x.shape[0], 2, 2))
        h[:, 0, 0] = -0.5 - 4.0 * self.k * (c**2 + u * s)
        h[:, 0, 1] = h[:, 1, 0] = 2.0 * self.k * c
        h[:, 1, 1] = -self.k
        return h


def make_target(name: str, log_offset: float = 0.0) -> TargetDistribution:
    if name == "gaussian":
        return GaussianTarget(np.zeros(2), np.eye(2), log_offset=log_offset)
    if name == "mog2":
        return Mog2Target(log_offset=log_offset)
    if name == "rosenbrock":
        return RosenbrockTarget(log_offset=log_offset)
    if name == "donut":
        return DonutTarget(log_offset=log_offset)
    if name == "funnel":
        return FunnelTarget(log_offset=log_offset)
    if name == "squiggle":
        return SquiggleTarget(log_offset=log_offset)
    raise ConfigurationError(f"unknown target {name!r}, expected one of {TARGET_NAMES}")
