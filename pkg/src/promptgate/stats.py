"""Streaming per-class and global Gaussian statistics over frozen features.

Covariances use the population convention (divide by count) so that folding
chunks in any order reproduces the one-shot batch statistics exactly; the
merge is the Chan-style pairwise update. Precision matrices are computed
once per task boundary from the regularized global covariance and shared by
all per-class Mahalanobis distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import kernels

__all__ = [
    "ClassStats",
    "GlobalStats",
    "PrecisionCache",
    "fold_samples",
    "regularized_precision",
    "default_epsilon",
    "mahalanobis",
    "update_md_hat",
]


def as_feature_matrix(batch, dim: int | None = None) -> np.ndarray:
    """Coerce a batch (list of vectors or (n, d) array) to float64 (n, d)."""
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0 if dim is None else dim)
    if arr.ndim != 2:
        raise ValueError(f"expected a batch of vectors, got ndim={arr.ndim}")
    if dim is not None and arr.shape[0] > 0 and arr.shape[1] != dim:
        raise ValueError(f"dimension mismatch: batch has d={arr.shape[1]}, expected d={dim}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("feature batch contains non-finite entries")
    return np.ascontiguousarray(arr)


@dataclass
class _MomentAccumulator:
    """Running mean plus centered cross-product matrix (single writer)."""

    dim: int
    count: int = 0
    mean: np.ndarray = field(default=None)  # type: ignore[assignment]
    _m2: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.zeros(self.dim)
        if self._m2 is None:
            self._m2 = np.zeros((self.dim, self.dim))

    @property
    def cov(self) -> np.ndarray:
        """Population covariance of everything folded so far."""
        if self.count == 0:
            return np.zeros((self.dim, self.dim))
        return self._m2 / self.count

    def fold(self, batch) -> None:
        x = as_feature_matrix(batch, self.dim)
        n_b = x.shape[0]
        if n_b == 0:
            return
        chunk_mean, chunk_m2 = kernels.fold_chunk(x)
        if self.count == 0:
            self.mean = chunk_mean
            self._m2 = chunk_m2
            self.count = n_b
            return
        n_a = self.count
        n = n_a + n_b
        delta = chunk_mean - self.mean
        self.mean = self.mean + delta * (n_b / n)
        self._m2 = self._m2 + chunk_m2 + np.outer(delta, delta) * (n_a * n_b / n)
        self.count = n


@dataclass
class ClassStats(_MomentAccumulator):
    """Per-class running statistics plus the class's average self-distance."""

    class_id: int = -1
    md_hat: float = 0.0


@dataclass
class GlobalStats(_MomentAccumulator):
    """Background statistics pooled over every feature seen so far."""


@dataclass(frozen=True)
class PrecisionCache:
    """Inverse of (global covariance + epsilon*I), frozen at a task boundary."""

    precision: np.ndarray
    epsilon_used: float
    source_count: int

    @property
    def dim(self) -> int:
        return self.precision.shape[0]


def fold_samples(stats: _MomentAccumulator, batch) -> _MomentAccumulator:
    """Fold a batch of feature vectors into `stats` (in place; returns it)."""
    stats.fold(batch)
    return stats


def default_epsilon(stats: GlobalStats) -> float:
    """Scale-invariant ridge: 1e-6 * mean diagonal variance (floored at 1e-12)."""
    return max(1e-6 * float(np.trace(stats.cov)) / stats.dim, 1e-12)


def regularized_precision(stats: GlobalStats, epsilon: float | None = None) -> PrecisionCache:
    """Invert (cov + epsilon*I) through its Cholesky factorization.

    `epsilon=None` selects the trace-scaled default. Raises ValueError naming
    the smallest pivot if the regularized matrix is still not positive
    definite.
    """
    if epsilon is None:
        epsilon = default_epsilon(stats)
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    cov = stats.cov
    if not np.allclose(cov, cov.T, atol=1e-8):
        raise ValueError("covariance matrix is not symmetric")
    a = cov + epsilon * np.eye(stats.dim)
    try:
        factor = cho_factor(a, lower=True)
    except np.linalg.LinAlgError as exc:
        smallest = float(np.linalg.eigvalsh(a).min())
        raise ValueError(
            f"covariance + {epsilon}*I is not positive definite "
            f"(smallest pivot {smallest:.3e}); increase epsilon"
        ) from exc
    precision = cho_solve(factor, np.eye(stats.dim))
    precision = (precision + precision.T) / 2.0
    return PrecisionCache(precision=precision, epsilon_used=float(epsilon),
                          source_count=stats.count)


def mahalanobis(x, mean, precision: PrecisionCache) -> float:
    """Quadratic form (x - mean)^T precision (x - mean), clamped at zero."""
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if x.shape != mean.shape or x.shape != (precision.dim,):
        raise ValueError(
            f"dimension mismatch: x {x.shape}, mean {mean.shape}, "
            f"precision d={precision.dim}"
        )
    dev = x - mean
    value = float(dev @ precision.precision @ dev)
    if value < 0:
        if value < -1e-9:
            raise ValueError(f"negative quadratic form {value}; precision is not PSD")
        value = 0.0
    return value


def update_md_hat(prev_md_hat: float, prev_count: int, task_features, mean_c,
                  precision: PrecisionCache) -> float:
    """Count-weighted recurrence for a class's average self-distance.

    Historical contributions are frozen as-is; the new batch is scored
    against the current class mean and global precision.
    """
    if prev_count < 0:
        raise ValueError("prev_count must be >= 0")
    x = as_feature_matrix(task_features, precision.dim)
    n_new = x.shape[0]
    if prev_count + n_new == 0:
        raise ValueError("no data for class: prev_count and batch are both empty")
    if n_new == 0:
        return float(prev_md_hat)
    mean_c = np.asarray(mean_c, dtype=np.float64)
    md_sum = float(kernels.mahalanobis_many(x, mean_c, precision.precision).sum())
    base = prev_count * prev_md_hat if prev_count > 0 else 0.0
    return (base + md_sum) / (prev_count + n_new)
