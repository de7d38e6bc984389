import unittest

import numpy as np
from parameterized import parameterized

from fedmesh.nets.util.parameters import ParameterError, ParameterVector
from fedmesh.strategy.aggregation import SiteUpdate, fedavg_aggregate, gcml_merge
from fedmesh.util.config.definitions import MergeMode


def _brute_force_mean(updates):
    total = sum(update.case_count for update in updates)
    dim = updates[0].params.dim
    return [sum(update.case_count * update.params.values[k] for update in updates) / total for k in range(dim)]


class TestFedAvg(unittest.TestCase):

    def test_hand_example(self):
        updates = [SiteUpdate(0, 48, ParameterVector([1.0])), SiteUpdate(1, 12, ParameterVector([5.0]))]
        self.assertAlmostEqual(1.8, fedavg_aggregate(updates).values[0], places=14)

    def test_single_update_is_returned_unchanged(self):
        params = ParameterVector([0.25, -3.0, 1e-17])
        self.assertEqual(params, fedavg_aggregate([SiteUpdate(4, 9, params)]))

    def test_matches_brute_force_weighted_mean(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            count, dim = int(rng.integers(1, 9)), int(rng.integers(1, 6))
            updates = [SiteUpdate(site_id, int(rng.integers(1, 200)), ParameterVector(rng.normal(size=dim)))
                       for site_id in range(count)]
            expected = _brute_force_mean(updates)
            np.testing.assert_allclose(fedavg_aggregate(updates).values, expected, rtol=1e-12, atol=1e-12)

    def test_result_lies_in_the_convex_hull(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            updates = [SiteUpdate(site_id, int(rng.integers(1, 50)), ParameterVector(rng.normal(size=4)))
                       for site_id in range(int(rng.integers(1, 6)))]
            stacked = np.stack([update.params.values for update in updates])
            aggregate = fedavg_aggregate(updates).values
            self.assertTrue(np.all(aggregate >= stacked.min(axis=0)))
            self.assertTrue(np.all(aggregate <= stacked.max(axis=0)))

    def test_empty_round_is_an_error(self):
        with self.assertRaises(ParameterError):
            fedavg_aggregate([])

    def test_case_count_must_be_positive(self):
        with self.assertRaises(ParameterError):
            SiteUpdate(0, 0, ParameterVector([1.0]))

    def test_dim_mismatch(self):
        with self.assertRaises(ParameterError):
            fedavg_aggregate([SiteUpdate(0, 1, ParameterVector([1.0])), SiteUpdate(1, 1, ParameterVector([1.0, 2.0]))])


class TestGcmlMerge(unittest.TestCase):

    def test_hand_example(self):
        merged = gcml_merge(ParameterVector([0.0]), ParameterVector([1.0]), 1.0, 3.0)
        self.assertAlmostEqual(0.75, merged.values[0], places=15)

    def test_inverse_mode(self):
        merged = gcml_merge(ParameterVector([0.0]), ParameterVector([1.0]), 1.0, 3.0, MergeMode.inverse)
        self.assertAlmostEqual(0.25, merged.values[0], places=15)

    def test_mode_accepts_config_spelling(self):
        merged = gcml_merge(ParameterVector([0.0]), ParameterVector([1.0]), 1.0, 3.0, 'INVERSE')
        self.assertAlmostEqual(0.25, merged.values[0], places=15)

    def test_zero_receiver_loss_adopts_the_sender(self):
        w_s = ParameterVector([2.0, -1.0])
        self.assertEqual(w_s, gcml_merge(ParameterVector([9.0, 9.0]), w_s, 0.0, 0.4))

    def test_matches_oracle_and_stays_on_the_segment(self):
        rng = np.random.default_rng(23)
        for _ in range(1000):
            w_r, w_s = rng.normal(size=3), rng.normal(size=3)
            v_r, v_s = rng.uniform(0.01, 5.0, size=2)
            for mode in MergeMode:
                weight_r, weight_s = (v_r, v_s) if mode is MergeMode.loss_weighted else (1 / v_r, 1 / v_s)
                expected = (weight_r * w_r + weight_s * w_s) / (weight_r + weight_s)
                merged = gcml_merge(ParameterVector(w_r), ParameterVector(w_s), v_r, v_s, mode).values
                np.testing.assert_allclose(merged, expected, rtol=1e-12, atol=1e-12)
                self.assertTrue(np.all(merged >= np.minimum(w_r, w_s)))
                self.assertTrue(np.all(merged <= np.maximum(w_r, w_s)))

    @parameterized.expand([
        ['both_zero', 0.0, 0.0, MergeMode.loss_weighted],
        ['negative', -0.1, 1.0, MergeMode.loss_weighted],
        ['inverse_zero', 0.0, 1.0, MergeMode.inverse],
    ])
    def test_invalid_losses(self, name, v_r, v_s, mode):  # pylint: disable=unused-argument
        with self.assertRaises(ValueError):
            gcml_merge(ParameterVector([0.0]), ParameterVector([1.0]), v_r, v_s, mode)
