"""Pure-NumPy implementations of the scoring/statistics kernels.

This is the fallback backend; `promptgate.kernels` prefers the compiled
extension when it is importable. Both backends share the same contracts
and are cross-checked in the test suite.
"""

import numpy as np

NAME = "numpy"


def mahalanobis_many(x: np.ndarray, mean: np.ndarray, precision: np.ndarray) -> np.ndarray:
    """Quadratic forms (x_i - mean)^T precision (x_i - mean) for every row of x."""
    dev = x - mean
    return np.einsum("ij,jk,ik->i", dev, precision, dev)


def rmd_many(
    x: np.ndarray,
    means: np.ndarray,
    md_hats: np.ndarray,
    precision: np.ndarray,
) -> np.ndarray:
    """Per-row min over classes of (mahalanobis to class mean - class md_hat).

    `means` is (C, d), `md_hats` is (C,); returns (n,).
    """
    out = np.full(x.shape[0], np.inf)
    for c in range(means.shape[0]):
        np.minimum(out, mahalanobis_many(x, means[c], precision) - md_hats[c], out=out)
    return out


def fold_chunk(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and centered cross-product matrix (dev^T dev) of a sample chunk."""
    mean = x.mean(axis=0)
    dev = x - mean
    return mean, dev.T @ dev
