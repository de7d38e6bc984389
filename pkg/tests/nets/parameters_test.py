import tempfile
import unittest
from pathlib import Path

import numpy as np
from parameterized import parameterized

from fedmesh.nets.util.parameters import ParameterError, ParameterVector, axpy, decode_params, decode_params_from, \
    encode_params, l2_distance_squared, load_checkpoint, save_checkpoint, weighted_mean


class TestParameterVector(unittest.TestCase):

    def test_values_are_read_only(self):
        vector = ParameterVector([1.0, 2.0])
        with self.assertRaises(ValueError):
            vector.values[0] = 3.0
        copy = vector.to_numpy()
        copy[0] = 3.0
        self.assertEqual(ParameterVector([1.0, 2.0]), vector)

    def test_equality_is_bit_level(self):
        self.assertNotEqual(ParameterVector([0.0]), ParameterVector([-0.0]))
        self.assertEqual(ParameterVector([0.1 + 0.2]), ParameterVector([0.30000000000000004]))

    def test_checked_construction_rejects_non_finite(self):
        with self.assertRaises(ParameterError):
            ParameterVector([1.0, np.nan], checked=True)
        self.assertFalse(ParameterVector([np.inf]).is_finite())


class TestVectorArithmetic(unittest.TestCase):

    def test_weighted_mean_hand_example(self):
        mean = weighted_mean([(ParameterVector([1.0]), 48), (ParameterVector([5.0]), 12)])
        self.assertAlmostEqual(1.8, mean.values[0], places=14)

    def test_weighted_mean_of_identical_vectors_is_exact(self):
        vector = ParameterVector([0.1, -0.7, 1e-300])
        self.assertEqual(vector, weighted_mean([(vector, 0.3), (vector, 0.9), (vector, 7.0)]))

    def test_weighted_mean_skips_zero_weights(self):
        mean = weighted_mean([(ParameterVector([2.0]), 1.0), (ParameterVector([100.0]), 0.0)])
        self.assertEqual(ParameterVector([2.0]), mean)

    @parameterized.expand([
        ['empty', []],
        ['zero_total', [(ParameterVector([1.0]), 0.0)]],
        ['negative_weight', [(ParameterVector([1.0]), -1.0)]],
        ['dim_mismatch', [(ParameterVector([1.0]), 1.0), (ParameterVector([1.0, 2.0]), 1.0)]],
        ['non_finite', [(ParameterVector([np.nan]), 1.0)]],
    ])
    def test_weighted_mean_errors(self, name, entries):  # pylint: disable=unused-argument
        with self.assertRaises(ParameterError):
            weighted_mean(entries)

    def test_axpy_and_distance(self):
        x, y = ParameterVector([1.0, 2.0]), ParameterVector([3.0, 5.0])
        self.assertEqual(ParameterVector([1.0, 1.0]), axpy(-2.0, x, y))
        self.assertEqual(13.0, l2_distance_squared(x, y))
        with self.assertRaises(ParameterError):
            axpy(1.0, x, ParameterVector([1.0]))


class TestParameterEncoding(unittest.TestCase):

    def test_layout(self):
        encoded = encode_params(ParameterVector([1.0, -2.5]))
        self.assertEqual(8 + 16, len(encoded))
        self.assertEqual((2).to_bytes(8, 'little'), encoded[:8])
        self.assertEqual(np.array([1.0, -2.5], dtype='<f8').tobytes(), encoded[8:])

    def test_round_trip_is_bit_exact(self):
        rng = np.random.default_rng(7)
        for dim in (0, 1, 33):
            vector = ParameterVector(rng.normal(size=dim) * 10.0 ** rng.integers(-300, 300, size=dim))
            self.assertEqual(vector, decode_params(encode_params(vector)))

    def test_decode_from_offset(self):
        first, second = ParameterVector([1.0]), ParameterVector([2.0, 3.0])
        buffer = encode_params(first) + encode_params(second)
        decoded, offset = decode_params_from(buffer, 0)
        self.assertEqual(first, decoded)
        decoded, offset = decode_params_from(buffer, offset)
        self.assertEqual(second, decoded)
        self.assertEqual(len(buffer), offset)

    @parameterized.expand([
        ['short_dim', b'\x01\x00'],
        ['dim_exceeds_buffer', (5).to_bytes(8, 'little') + bytes(16)],
        ['trailing_bytes', (1).to_bytes(8, 'little') + bytes(9)],
    ])
    def test_decode_errors(self, name, buffer):  # pylint: disable=unused-argument
        with self.assertRaises(ParameterError):
            decode_params(buffer)

    def test_encode_rejects_non_finite(self):
        with self.assertRaises(ParameterError):
            encode_params(ParameterVector([np.inf]))

    def test_checkpoint_round_trip(self):
        vector = ParameterVector(np.linspace(-1.0, 1.0, 17))
        with tempfile.TemporaryDirectory() as directory:
            path = save_checkpoint(Path(directory) / 'nested' / 'model.params', vector)
            self.assertEqual(8 + 17 * 8, path.stat().st_size)
            self.assertEqual(vector, load_checkpoint(path))
