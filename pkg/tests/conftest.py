import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_spd(rng, d, scale=1.0):
    """Random symmetric positive-definite matrix with eigenvalues >= 0.1."""
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T + 0.1 * np.eye(d))


def batch_mean_cov(x):
    """Two-pass population mean/covariance oracle (independent of the
    streaming implementation)."""
    x = np.asarray(x, dtype=np.float64)
    mean = x.sum(axis=0) / x.shape[0]
    dev = x - mean
    return mean, (dev.T @ dev) / x.shape[0]
