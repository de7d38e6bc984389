import math
import unittest

import numpy as np
from parameterized import parameterized
from scipy import stats

from fedmesh.experiment.statistics import anova_one_way, size_performance_trend


def _brute_force_anova(groups):
    values = [value for group in groups for value in group]
    grand_mean = sum(values) / len(values)
    ss_between = 0.0
    ss_within = 0.0
    for group in groups:
        mean = sum(group) / len(group)
        ss_between += len(group) * (mean - grand_mean) ** 2
        ss_within += sum((value - mean) ** 2 for value in group)
    df_between, df_within = len(groups) - 1, len(values) - len(groups)
    return (ss_between / df_between) / (ss_within / df_within)


class TestAnova(unittest.TestCase):

    def test_hand_example(self):
        # SSB = 32, SSW = 10 over df (1, 6).
        result = anova_one_way([[1, 2, 3, 4], [5, 6, 7, 8]])
        self.assertAlmostEqual(19.2, result.f_statistic, places=12)
        self.assertEqual((1, 6), (result.df_between, result.df_within))
        self.assertAlmostEqual(stats.f.sf(19.2, 1, 6), result.p_value, places=12)
        self.assertAlmostEqual(0.0047, result.p_value, places=4)

    def test_random_groups_match_the_sum_of_squares_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            groups = [list(rng.normal(rng.normal(), rng.uniform(0.1, 3.0), size=int(rng.integers(2, 12))))
                      for _ in range(int(rng.integers(2, 7)))]
            result = anova_one_way(groups)
            expected = _brute_force_anova(groups)
            self.assertTrue(math.isclose(expected, result.f_statistic, rel_tol=1e-10, abs_tol=1e-10))
            reference = stats.f_oneway(*groups)
            self.assertTrue(math.isclose(reference.pvalue, result.p_value, rel_tol=1e-8, abs_tol=1e-12))

    def test_no_within_group_spread(self):
        result = anova_one_way([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        self.assertEqual(float('inf'), result.f_statistic)
        self.assertEqual(0.0, result.p_value)

    def test_equal_means(self):
        result = anova_one_way([[1.0, 3.0], [2.0, 2.0]])
        self.assertEqual(0.0, result.f_statistic)
        self.assertAlmostEqual(1.0, result.p_value, places=12)

    @parameterized.expand([
        ['single_group', [[1.0, 2.0, 3.0]]],
        ['singleton_group', [[1.0, 2.0], [3.0]]],
        ['identical_values', [[2.0, 2.0], [2.0, 2.0]]],
        ['non_finite', [[1.0, float('nan')], [2.0, 3.0]]],
    ])
    def test_invalid_input(self, name, groups):  # pylint: disable=unused-argument
        with self.assertRaises(ValueError):
            anova_one_way(groups)


class TestSizePerformanceTrend(unittest.TestCase):

    def test_monotone_trend(self):
        result = size_performance_trend([12, 16, 24, 48], [0.5, 0.6, 0.7, 0.9])
        self.assertAlmostEqual(1.0, result.rho)

    def test_inverse_trend(self):
        self.assertAlmostEqual(-1.0, size_performance_trend([1, 2, 3], [3.0, 2.0, 1.0]).rho)

    @parameterized.expand([
        ['length_mismatch', [1, 2, 3], [1.0, 2.0]],
        ['too_few', [1, 2], [1.0, 2.0]],
    ])
    def test_invalid_input(self, name, sizes, scores):  # pylint: disable=unused-argument
        with self.assertRaises(ValueError):
            size_performance_trend(sizes, scores)
