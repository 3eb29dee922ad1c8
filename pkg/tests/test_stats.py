import numpy as np
import pytest

from promptgate.stats import (
    ClassStats,
    GlobalStats,
    PrecisionCache,
    default_epsilon,
    fold_samples,
    mahalanobis,
    regularized_precision,
    update_md_hat,
)

from conftest import batch_mean_cov, random_spd


def identity_precision(d):
    return PrecisionCache(precision=np.eye(d), epsilon_used=0.0, source_count=1)


class TestFoldSamples:
    def test_single_sample(self):
        stats = fold_samples(GlobalStats(dim=3), [[1.0, -2.0, 0.5]])
        np.testing.assert_array_equal(stats.mean, [1.0, -2.0, 0.5])
        np.testing.assert_array_equal(stats.cov, np.zeros((3, 3)))
        assert stats.count == 1

    def test_two_singletons_match_pair_fold(self, rng):
        v, w = rng.standard_normal(4), rng.standard_normal(4)
        a = GlobalStats(dim=4)
        fold_samples(a, [v])
        fold_samples(a, [w])
        b = fold_samples(GlobalStats(dim=4), [v, w])
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(a.cov, b.cov, rtol=1e-12, atol=1e-12)

    def test_chunked_fold_matches_batch_oracle(self, rng):
        x = rng.standard_normal((1000, 8)) * 3.0 + rng.standard_normal(8)
        stats = GlobalStats(dim=8)
        edges = np.sort(rng.choice(np.arange(1, 1000), size=6, replace=False))
        for chunk in np.split(x, edges):
            fold_samples(stats, chunk)
        mean, cov = batch_mean_cov(x)
        np.testing.assert_allclose(stats.mean, mean, rtol=1e-9)
        np.testing.assert_allclose(stats.cov, cov, rtol=1e-9, atol=1e-12)
        assert stats.count == 1000

    def test_empty_batch_is_identity(self, rng):
        stats = fold_samples(GlobalStats(dim=2), rng.standard_normal((5, 2)))
        mean, cov = stats.mean.copy(), stats.cov.copy()
        fold_samples(stats, np.empty((0, 2)))
        np.testing.assert_array_equal(stats.mean, mean)
        np.testing.assert_array_equal(stats.cov, cov)
        assert stats.count == 5

    def test_merge_equivalence_random_partitions(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 300))
            d = int(rng.integers(1, 9))
            x = rng.standard_normal((n, d)) * rng.uniform(0.1, 10)
            n_edges = int(rng.integers(0, min(6, n - 1)))
            edges = np.sort(rng.choice(np.arange(1, n), size=n_edges, replace=False))
            stats = GlobalStats(dim=d)
            for chunk in np.split(x, edges):
                fold_samples(stats, chunk)
            mean, cov = batch_mean_cov(x)
            np.testing.assert_allclose(stats.mean, mean, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(stats.cov, cov, rtol=1e-9, atol=1e-12)

    def test_affine_translation(self, rng):
        x = rng.standard_normal((200, 5))
        shift = rng.standard_normal(5) * 7
        a = fold_samples(GlobalStats(dim=5), x)
        b = fold_samples(GlobalStats(dim=5), x + shift)
        np.testing.assert_allclose(b.mean, a.mean + shift, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(b.cov, a.cov, rtol=1e-9, atol=1e-9)

    def test_dimension_mismatch_rejected(self):
        stats = GlobalStats(dim=3)
        with pytest.raises(ValueError, match="dimension mismatch"):
            fold_samples(stats, [[1.0, 2.0]])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            fold_samples(GlobalStats(dim=2), [[np.nan, 0.0]])

    def test_class_stats_carry_identity(self):
        stats = ClassStats(dim=2, class_id=7)
        fold_samples(stats, [[0.0, 1.0], [2.0, 3.0]])
        assert stats.class_id == 7 and stats.count == 2


class TestRegularizedPrecision:
    def test_identity_inverse(self):
        stats = GlobalStats(dim=3)
        fold_samples(stats, np.diag([2.0, 2.0, 2.0]))  # any data; then override
        stats._m2 = np.eye(3) * stats.count
        cache = regularized_precision(stats, epsilon=0.0)
        np.testing.assert_allclose(cache.precision, np.eye(3), atol=1e-12)

    def test_zero_cov_scalar_inverse(self):
        stats = GlobalStats(dim=2)
        fold_samples(stats, [[1.0, 1.0]])  # single point -> zero covariance
        cache = regularized_precision(stats, epsilon=0.5)
        np.testing.assert_allclose(cache.precision, 2.0 * np.eye(2), atol=1e-12)
        assert cache.epsilon_used == 0.5
        assert cache.source_count == 1

    def test_multiply_back(self, rng):
        d = 6
        spd = random_spd(rng, d)
        stats = GlobalStats(dim=d)
        stats.count = 10
        stats._m2 = spd * stats.count
        cache = regularized_precision(stats, epsilon=1e-4)
        product = cache.precision @ (spd + 1e-4 * np.eye(d))
        np.testing.assert_allclose(product, np.eye(d), atol=1e-8)

    def test_precision_symmetric(self, rng):
        stats = fold_samples(GlobalStats(dim=5), rng.standard_normal((50, 5)))
        cache = regularized_precision(stats)
        asym = np.abs(cache.precision - cache.precision.T).max()
        assert asym <= 1e-10

    def test_failure_names_smallest_pivot(self):
        stats = GlobalStats(dim=2)
        stats.count = 1
        stats._m2 = np.array([[1.0, 0.0], [0.0, -2.0]])  # indefinite
        with pytest.raises(ValueError, match="smallest pivot"):
            regularized_precision(stats, epsilon=0.0)

    def test_default_epsilon_scales_with_trace(self):
        stats = GlobalStats(dim=2)
        stats.count = 1
        stats._m2 = np.diag([4.0, 2.0])
        assert default_epsilon(stats) == pytest.approx(1e-6 * 3.0)


class TestMahalanobis:
    def test_zero_displacement(self):
        assert mahalanobis([1.0, 2.0], [1.0, 2.0], identity_precision(2)) == 0.0

    def test_euclidean_with_identity(self):
        assert mahalanobis([3.0, 4.0], [0.0, 0.0], identity_precision(2)) == pytest.approx(25.0)

    def test_diagonal_quadratic_form(self):
        cache = PrecisionCache(np.diag([0.5, 2.0]), 0.0, 1)
        assert mahalanobis([1.0, 1.0], [0.0, 0.0], cache) == pytest.approx(2.5)

    def test_rotation_invariance(self, rng):
        d = 6
        spd = random_spd(rng, d)
        precision = np.linalg.inv(spd)
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        x, mu = rng.standard_normal(d), rng.standard_normal(d)
        base = mahalanobis(x, mu, PrecisionCache(precision, 0.0, 1))
        rotated = mahalanobis(q @ x, q @ mu,
                              PrecisionCache(q @ precision @ q.T, 0.0, 1))
        assert rotated == pytest.approx(base, abs=1e-8)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            mahalanobis([1.0], [1.0, 2.0], identity_precision(2))


class TestUpdateMdHat:
    def test_zero_weight_update(self):
        cache = identity_precision(2)
        assert update_md_hat(3.5, 10, np.empty((0, 2)), [0.0, 0.0], cache) == 3.5

    def test_plain_average_from_scratch(self):
        cache = identity_precision(1)
        # distances from mean 0: sqrt(2)^2 = 2 and 2^2 = 4
        out = update_md_hat(0.0, 0, [[np.sqrt(2.0)], [2.0]], [0.0], cache)
        assert out == pytest.approx(3.0)

    def test_weighted_recurrence(self):
        cache = identity_precision(1)
        # batch of 5 samples with squared distances summing to 20
        feats = [[2.0]] * 5  # each contributes 4
        out = update_md_hat(1.0, 10, feats, [0.0], cache)
        assert out == pytest.approx((10 * 1.0 + 20.0) / 15.0)

    def test_no_data_errors(self):
        with pytest.raises(ValueError, match="no data"):
            update_md_hat(0.0, 0, np.empty((0, 3)), np.zeros(3), identity_precision(3))

    def test_convex_combination(self, rng):
        cache = PrecisionCache(random_spd(rng, 3), 0.0, 1)
        for _ in range(20):
            prev = float(rng.uniform(0, 10))
            n_prev = int(rng.integers(1, 50))
            batch = rng.standard_normal((int(rng.integers(1, 30)), 3))
            mu = rng.standard_normal(3)
            batch_mean = float(np.mean(
                [mahalanobis(b, mu, cache) for b in batch]))
            out = update_md_hat(prev, n_prev, batch, mu, cache)
            assert min(prev, batch_mean) - 1e-9 <= out <= max(prev, batch_mean) + 1e-9
