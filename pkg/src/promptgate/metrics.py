"""Continual-learning evaluation metrics over the task-accuracy matrix.

A[i][j] is the test accuracy on task j measured right after training task i
(defined for j <= i). The three headline metrics follow the standard
definitions from the prompt-based CL literature:

  final average accuracy   FAA = mean of the last row
  cumulative avg accuracy  CAA = mean over rows of each row's running mean
  final forgetting measure FFM = mean over non-final tasks of
                                 (peak accuracy before the final model
                                  minus final accuracy)

The usage gap is the L1 distance between training-time and inference-time
prompt-assignment proportions.
"""

from __future__ import annotations

import numpy as np

__all__ = ["faa", "caa", "ffm", "usage_gap", "usage_proportions"]


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a square T x T accuracy matrix, got {a.shape}")
    return a


def faa(a) -> float:
    a = _as_matrix(a)
    t = a.shape[0]
    return float(a[t - 1, :].mean())


def caa(a) -> float:
    a = _as_matrix(a)
    t = a.shape[0]
    return float(np.mean([a[i, : i + 1].mean() for i in range(t)]))


def ffm(a) -> float:
    a = _as_matrix(a)
    t = a.shape[0]
    if t < 2:
        raise ValueError("forgetting undefined for a single task")
    drops = [a[j: t - 1, j].max() - a[t - 1, j] for j in range(t - 1)]
    return float(np.mean(drops))


def usage_proportions(counts) -> np.ndarray:
    """Normalize selection counts onto the simplex (all-zero stays all-zero)."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    return counts / total if total > 0 else counts


def usage_gap(train, val) -> float:
    """L1 distance between two prompt-usage distributions; range [0, 2]."""
    train = np.asarray(train, dtype=np.float64)
    val = np.asarray(val, dtype=np.float64)
    if train.shape != val.shape:
        raise ValueError(f"length mismatch: {train.shape} vs {val.shape}")
    return float(np.abs(train - val).sum())
