# Bayesian logistic regression posterior over (w, bias, log alpha)

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy.special import expit

from core.targets.analytic import TargetDistribution, as_batch
from core.utils.errors import ConfigurationError, ParseError
from core.utils.prng import Prng

logger = logging.getLogger(__name__)


@dataclass
class BlrDataset:
    """Standardized features, binary labels and a disjoint train/test split."""

    features: np.ndarray
    labels: np.ndarray
    train_index: np.ndarray
    test_index: np.ndarray
    feature_names: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not np.all(np.isfinite(self.features)):
            raise ConfigurationError("dataset features contain non-finite values")
        if not np.all(np.isin(self.labels, (0.0, 1.0))):
            raise ConfigurationError("dataset labels must be 0 or 1")
        if np.intersect1d(self.train_index, self.test_index).size:
            raise ConfigurationError("train and test splits overlap")

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def x_train(self):
        return self.features[self.train_index]

    @property
    def y_train(self):
        return self.labels[self.train_index]

    @property
    def x_test(self):
        return self.features[self.test_index]

    @property
    def y_test(self):
        return self.labels[self.test_index]


def build_dataset(features, labels, test_fraction: float, prng: Prng, feature_names=None) -> BlrDataset:
    """Seeded split, then per-column standardization with train statistics."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    names = list(feature_names or [f"x{j}" for j in range(features.shape[1])])
    if not 0.0 <= test_fraction < 1.0:
        raise ConfigurationError(f"test_fraction must lie in [0, 1), got {test_fraction}")
    n = features.shape[0]
    n_test = int(round(n * test_fraction))
    order = prng.permutation(n)
    test_index = np.sort(order[:n_test])
    train_index = np.sort(order[n_test:])
    if train_index.size == 0:
        raise ConfigurationError("training split is empty")

    warnings = []
    mean = features[train_index].mean(axis=0)
    std = features[train_index].std(axis=0)
    keep = std > 0
    for j in np.flatnonzero(~keep):
        message = f"dropped constant column {names[j]!r}"
        logger.warning(message)
        warnings.append(message)
    standardized = (features[:, keep] - mean[keep]) / std[keep]
    kept_names = [name for name, k in zip(names, keep) if k]
    return BlrDataset(standardized, labels, train_index, test_index, kept_names, warnings)


def load_blr_csv(path, label_column: str, test_fraction: float, prng: Prng) -> BlrDataset:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"dataset file not found: {path}")
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty CSV file", row=0, column=None)
        if label_column not in header:
            raise ParseError(f"label column {label_column!r} not in header", row=0, column=label_column)
        label_at = header.index(label_column)
        rows = []
        for row_number, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, got {len(row)}", row=row_number, column=None)
            values = []
            for column, cell in zip(header, row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(f"non-numeric cell {cell!r}", row=row_number, column=column)
            rows.append(values)
    table = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))
    labels = table[:, label_at]
    features = np.delete(table, label_at, axis=1)
    names = [h for i, h in enumerate(header) if i != label_at]

    remap_warning = None
    label_set = set(np.unique(labels).tolist())
    if label_set <= {1.0, 2.0} and 2.0 in label_set:
        labels = labels - 1.0
        remap_warning = "labels {1, 2} remapped to {0, 1}"
        logger.warning(remap_warning)
    elif not label_set <= {0.0, 1.0}:
        raise ParseError(f"labels must be binary, found {sorted(label_set)}", row=None, column=label_column)

    dataset = build_dataset(features, labels, test_fraction, prng, names)
    if remap_warning:
        dataset.warnings.insert(0, remap_warning)
    logger.info(f"Loaded {path.name}: {len(dataset.train_index)} train / {len(dataset.test_index)} test rows, "
                f"{dataset.n_features} features")
    return dataset


def write_blr_csv(path, features, labels, label_column: str = "label") -> Path:
    path = Path(path)
    features = np.asarray(features, dtype=np.float64)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"x{j}" for j in range(features.shape[1])] + [label_column])
        for row, label in zip(features, labels):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(label))])
    return path


def make_synthetic_blr(n_features: int, n_rows: int, prng: Prng):
    """Logistic data with a hidden weight vector; returns (features, labels)."""
    features = prng.normal((n_rows, n_features))
    w_true = prng.normal(n_features)
    bias = 0.5 * prng.normal(1)[0]
    labels = (prng.uniform(n_rows) < expit(features @ w_true + bias)).astype(np.float64)
    return features, labels


class BlrPosterior(TargetDistribution):
    """
    Posterior over xi = (w, bias, log alpha) with w ~ N(0, alpha^-1 I) and
    alpha ~ Gamma(shape, rate). The log-alpha Jacobian term is included.
    With batch_index set, the likelihood is the rescaled minibatch estimate
    (N / |B|) sum_B log p(y | x).
    """

    name = "blr"

    def __init__(self, dataset: BlrDataset, minibatch_size: int = 500, prior_shape: float = 1.0,
                 prior_rate: float = 0.01, batch_index: Optional[np.ndarray] = None, log_offset: float = 0.0):
        super().__init__(dataset.n_features + 2, log_offset)
        if minibatch_size <= 0:
            raise ConfigurationError(f"minibatch_size must be positive, got {minibatch_size}")
        self.dataset = dataset
        self.minibatch_size = int(minibatch_size)
        self.prior_shape = prior_shape
        self.prior_rate = prior_rate
        self._x = dataset.x_train
        self._y = dataset.y_train
        n_train = self._x.shape[0]
        if batch_index is None:
            self.batch_index = None
            self._xb, self._yb, self._scale = self._x, self._y, 1.0
        else:
            batch_index = np.asarray(batch_index, dtype=np.int64)
            if batch_index.size == 0:
                raise ConfigurationError("minibatch is empty")
            if batch_index.min() < 0 or batch_index.max() >= n_train:
                raise ConfigurationError("minibatch indices fall outside the training split")
            self.batch_index = batch_index
            self._xb, self._yb = self._x[batch_index], self._y[batch_index]
            self._scale = n_train / batch_index.size

    def on_minibatch(self, batch_index) -> "BlrPosterior":
        return BlrPosterior(self.dataset, self.minibatch_size, self.prior_shape, self.prior_rate,
                            batch_index, self.log_offset)

    def minibatch(self, prng: Prng) -> "BlrPosterior":
        n_train = self._x.shape[0]
        size = min(self.minibatch_size, n_train)
        return self.on_minibatch(np.sort(prng.choice(n_train, size)))

    def _split(self, xi):
        d = self.dataset.n_features
        return xi[:, :d], xi[:, d], xi[:, d + 1]

    def _logits(self, w, bias):
        return w @ self._xb.T + bias[:, None]

    def _log_density(self, xi):
        w, bias, log_alpha = self._split(xi)
        t = self._logits(w, bias)
        loglik = self._scale * np.sum(self._yb[None] * t - np.logaddexp(0.0, t), axis=1)
        alpha = np.exp(log_alpha)
        d = self.dataset.n_features
        log_prior_w = 0.5 * d * log_alpha - 0.5 * alpha * np.sum(w**2, axis=1)
        log_prior_alpha = (self.prior_shape - 1.0) * log_alpha - self.prior_rate * alpha
        return loglik + log_prior_w + log_prior_alpha + log_alpha

    def _score(self, xi):
        w, bias, log_alpha = self._split(xi)
        residual = self._scale * (self._yb[None] - expit(self._logits(w, bias)))
        alpha = np.exp(log_alpha)
        d = self.dataset.n_features
        grad_w = residual @ self._xb - alpha[:, None] * w
        grad_bias = residual.sum(axis=1)
        grad_log_alpha = 0.5 * d + self.prior_shape - alpha * (0.5 * np.sum(w**2, axis=1) + self.prior_rate)
        return np.column_stack([grad_w, grad_bias, grad_log_alpha])

    def _vjp(self, xi, v):
        w, bias, log_alpha = self._split(xi)
        v_w, v_bias, v_log_alpha = self._split(v)
        p = expit(self._logits(w, bias))
        curvature = self._scale * p * (1.0 - p)
        u = (v_w @ self._xb.T + v_bias[:, None]) * curvature
        alpha = np.exp(log_alpha)
        out_w = -(u @ self._xb) - alpha[:, None] * (v_w + w * v_log_alpha[:, None])
        out_bias = -u.sum(axis=1)
        out_log_alpha = -alpha * (np.sum(w * v_w, axis=1)
                                  + (0.5 * np.sum(w**2, axis=1) + self.prior_rate) * v_log_alpha)
        return np.column_stack([out_w, out_bias, out_log_alpha])


def blr_score(posterior: BlrPosterior, xi, minibatch_indices) -> np.ndarray:
    """Score of the minibatch posterior; indices are positions in the training split."""
    minibatch_indices = np.asarray(minibatch_indices, dtype=np.int64).reshape(-1)
    if minibatch_indices.size == 0:
        raise ConfigurationError("minibatch is empty")
    return posterior.on_minibatch(minibatch_indices).score(xi)


def blr_accuracy(posterior: BlrPosterior, xi_samples) -> float:
    """Test accuracy of the posterior-averaged predictive probability thresholded at 0.5."""
    xi = as_batch(xi_samples, posterior.dim)
    x_test, y_test = posterior.dataset.x_test, posterior.dataset.y_test
    if y_test.size == 0:
        raise ConfigurationError("test split is empty")
    d = posterior.dataset.n_features
    probs = expit(xi[:, :d] @ x_test.T + xi[:, d][:, None]).mean(axis=0)
    return float(np.mean((probs > 0.5) == (y_test == 1.0)))
