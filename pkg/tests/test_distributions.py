import math
import unittest

import numpy as np
from scipy import stats

from src.domain.distributions import (
    std_normal_cdf, std_normal_quantile, tightening_offset, truncated_cdf,
    truncated_mass, truncated_moments, truncated_quantile, truncated_sample,
)
from src.domain.exceptions import DistributionError
from src.domain.models import GaussianSpec, TruncatedGaussianSpec


class TestStandardNormal(unittest.TestCase):
    def test_known_values(self):
        self.assertAlmostEqual(std_normal_cdf(0.0), 0.5, places=15)
        self.assertAlmostEqual(std_normal_quantile(0.95), 1.6448536269514722, places=12)

    def test_quantile_cdf_round_trip(self):
        # Arrange
        probabilities = np.concatenate([[1e-6, 1e-4, 0.01], np.linspace(0.05, 0.95, 19), [0.99, 1 - 1e-4, 1 - 1e-6]])

        # Act & Assert
        for p in probabilities:
            self.assertLess(abs(std_normal_cdf(std_normal_quantile(p)) - p), 1e-10, msg=f"p={p}")

    def test_invalid_probability_raises(self):
        for p in (0.0, 1.0, -0.1, 1.5):
            with self.assertRaises(DistributionError):
                std_normal_quantile(p)

    def test_non_finite_cdf_input_raises(self):
        with self.assertRaises(DistributionError):
            std_normal_cdf(math.nan)


class TestTruncatedGaussian(unittest.TestCase):
    def setUp(self):
        self.base = GaussianSpec(mean=0.7, stddev=0.01 + 0.7 / 3.0)
        self.spec = TruncatedGaussianSpec(base=self.base, lower=0.0, upper=0.7 + 3 * self.base.stddev)

    def test_untruncated_cdf_matches_normal(self):
        # Arrange
        spec = TruncatedGaussianSpec(base=GaussianSpec(1.0, 2.0))

        # Act & Assert
        for x in (-3.0, 0.0, 1.0, 2.5, 6.0):
            self.assertLess(abs(truncated_cdf(spec, x) - std_normal_cdf((x - 1.0) / 2.0)), 1e-12)

    def test_cdf_is_zero_and_one_outside_bounds(self):
        self.assertEqual(truncated_cdf(self.spec, -1.0), 0.0)
        self.assertEqual(truncated_cdf(self.spec, self.spec.upper + 1.0), 1.0)

    def test_quantile_inverts_cdf(self):
        for p in (1e-6, 0.05, 0.5, 0.8, 0.95, 1 - 1e-6):
            d = truncated_quantile(self.spec, p)
            self.assertLess(abs(truncated_cdf(self.spec, d) - p), 1e-9, msg=f"p={p}")

    def test_quantile_stays_inside_bounds(self):
        for p in (1e-9, 0.5, 1 - 1e-9):
            d = truncated_quantile(self.spec, p)
            self.assertGreaterEqual(d, self.spec.lower)
            self.assertLessEqual(d, self.spec.upper)

    def test_moments_match_scipy(self):
        # Arrange
        a = (self.spec.lower - self.base.mean) / self.base.stddev
        b = (self.spec.upper - self.base.mean) / self.base.stddev
        expected_mean, expected_var = stats.truncnorm.stats(a, b, loc=self.base.mean, scale=self.base.stddev, moments="mv")

        # Act
        mean, var = truncated_moments(self.spec)

        # Assert
        self.assertAlmostEqual(mean, float(expected_mean), places=12)
        self.assertAlmostEqual(var, float(expected_var), places=12)

    def test_truncated_mean_shifts_up_when_lower_bound_cuts(self):
        mean, var = truncated_moments(self.spec)
        self.assertGreater(mean, self.base.mean)
        self.assertLess(var, self.base.stddev ** 2)

    def test_zero_stddev_is_point_mass(self):
        spec = TruncatedGaussianSpec(base=GaussianSpec(0.3, 0.0), lower=0.0, upper=1.0)
        self.assertEqual(truncated_moments(spec), (0.3, 0.0))
        self.assertEqual(truncated_quantile(spec, 0.9), 0.3)

    def test_degenerate_truncation_raises(self):
        # Massa di [40, 41] untuk N(0,1) praktis nol
        spec = TruncatedGaussianSpec(base=GaussianSpec(0.0, 1.0), lower=40.0, upper=41.0)
        with self.assertRaises(DistributionError):
            truncated_moments(spec)

    def test_far_tail_interval_keeps_precision(self):
        # Arrange: interval di ekor kanan, massa ~1e-9
        spec = TruncatedGaussianSpec(base=GaussianSpec(0.0, 1.0), lower=6.0, upper=7.0)

        # Act
        mass = truncated_mass(spec)
        median = truncated_quantile(spec, 0.5)

        # Assert
        self.assertGreater(mass, 0.0)
        self.assertGreater(median, 6.0)
        self.assertLess(median, 7.0)
        self.assertAlmostEqual(truncated_cdf(spec, median), 0.5, places=8)

    def test_invalid_bounds_raise(self):
        with self.assertRaises(DistributionError):
            TruncatedGaussianSpec(base=GaussianSpec(0.0, 1.0), lower=1.0, upper=1.0)
        with self.assertRaises(DistributionError):
            GaussianSpec(0.0, -1.0)

    def test_monte_carlo_moments(self):
        # Arrange
        rng = np.random.Generator(np.random.Philox(7))
        samples = truncated_sample(self.spec, rng.random(1_000_000))

        # Act
        mean, var = truncated_moments(self.spec)

        # Assert
        self.assertLess(abs(samples.mean() - mean), 1e-3)
        self.assertLess(abs(samples.var() - var), 1e-3)
        self.assertGreaterEqual(samples.min(), self.spec.lower)
        self.assertLessEqual(samples.max(), self.spec.upper)


class TestTighteningOffset(unittest.TestCase):
    def test_gaussian_offset(self):
        spec = GaussianSpec(mean=2.0, stddev=0.5)
        self.assertAlmostEqual(tightening_offset(spec, 0.95), 2.0 + 0.5 * 1.6448536269514722, places=12)

    def test_half_gamma_is_mean_for_untruncated(self):
        spec = TruncatedGaussianSpec(base=GaussianSpec(2.0, 0.5))
        self.assertAlmostEqual(tightening_offset(spec, 0.5), 2.0, places=12)

    def test_offset_grows_with_gamma(self):
        spec = TruncatedGaussianSpec(base=GaussianSpec(1.0, 0.4), lower=0.0, upper=2.2)
        offsets = [tightening_offset(spec, g) for g in (0.5, 0.6, 0.8, 0.95)]
        self.assertEqual(offsets, sorted(offsets))

    def test_gamma_outside_open_interval_raises(self):
        for gamma in (0.0, 1.0):
            with self.assertRaises(DistributionError):
                tightening_offset(GaussianSpec(0.0, 1.0), gamma)


if __name__ == "__main__":
    unittest.main()
