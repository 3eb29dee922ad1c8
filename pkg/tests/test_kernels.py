import numpy as np
import pytest

from promptgate import kernels
from promptgate.kernels import numpy_backend

from conftest import batch_mean_cov, random_spd

HAS_NATIVE = "native" in kernels.available_backends()


@pytest.fixture
def restore_backend():
    before = kernels.active_backend()
    yield
    kernels.set_backend(before)


def test_backend_selection(restore_backend):
    kernels.set_backend("numpy")
    assert kernels.active_backend() == "numpy"
    with pytest.raises(ValueError, match="unknown or unavailable"):
        kernels.set_backend("fortran")


def test_numpy_backend_against_direct_math(rng):
    x = rng.standard_normal((40, 5))
    mean = rng.standard_normal(5)
    precision = random_spd(rng, 5)
    out = numpy_backend.mahalanobis_many(x, mean, precision)
    for i in range(40):
        dev = x[i] - mean
        assert out[i] == pytest.approx(dev @ precision @ dev, rel=1e-12)


def test_fold_chunk_matches_two_pass_oracle(rng):
    x = rng.standard_normal((500, 9)) * 3
    mean, m2 = kernels.fold_chunk(np.ascontiguousarray(x))
    mean_o, cov_o = batch_mean_cov(x)
    np.testing.assert_allclose(mean, mean_o, rtol=1e-12)
    np.testing.assert_allclose(m2 / 500, cov_o, rtol=1e-9, atol=1e-12)


@pytest.mark.skipif(not HAS_NATIVE, reason="native kernels not built")
class TestBackendEquivalence:
    def test_mahalanobis_many(self, rng):
        from promptgate.kernels import _native
        for _ in range(5):
            n, d = int(rng.integers(1, 200)), int(rng.integers(1, 24))
            x = np.ascontiguousarray(rng.standard_normal((n, d)))
            mean = rng.standard_normal(d)
            precision = np.ascontiguousarray(random_spd(rng, d))
            np.testing.assert_allclose(
                _native.mahalanobis_many(x, mean, precision),
                numpy_backend.mahalanobis_many(x, mean, precision),
                rtol=1e-10, atol=1e-12)

    def test_rmd_many(self, rng):
        from promptgate.kernels import _native
        for _ in range(5):
            n, d, c = (int(rng.integers(1, 200)), int(rng.integers(1, 16)),
                       int(rng.integers(1, 12)))
            x = np.ascontiguousarray(rng.standard_normal((n, d)))
            means = np.ascontiguousarray(rng.standard_normal((c, d)))
            md_hats = np.ascontiguousarray(rng.uniform(0, 4, size=c))
            precision = np.ascontiguousarray(random_spd(rng, d))
            np.testing.assert_allclose(
                _native.rmd_many(x, means, md_hats, precision),
                numpy_backend.rmd_many(x, means, md_hats, precision),
                rtol=1e-10, atol=1e-12)

    def test_engine_results_agree_across_backends(self, restore_backend):
        from promptgate.data import SyntheticStreamConfig, generate_stream
        from promptgate.loop import RunConfig, run_sequence
        from promptgate.model import TrainConfig

        stream = generate_stream(SyntheticStreamConfig(
            tasks=2, samples_per_class_train=30, samples_per_class_test=15,
            seed=0))
        cfg = RunConfig(train=TrainConfig(epochs=3), seed=0)
        results = {}
        for backend in ("native", "numpy"):
            kernels.set_backend(backend)
            results[backend] = run_sequence(cfg, stream)
        np.testing.assert_allclose(results["native"].accuracy,
                                   results["numpy"].accuracy, atol=1e-12)
        np.testing.assert_allclose(results["native"].tau_per_task[1:],
                                   results["numpy"].tau_per_task[1:], rtol=1e-9)
