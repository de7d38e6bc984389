import unittest

import numpy as np
from parameterized import parameterized

from fedmesh.core.trainer import LocalTrainer
from fedmesh.datasets.dataset import LabeledDataset
from fedmesh.nets.util.parameters import ParameterVector, axpy
from fedmesh.strategy.optimization import PredictionBatch, contrastive_kl, dcml_step, fedprox_objective, \
    kl_divergence
from fedmesh.util.config.federation import TrainerSpec

SPEC = TrainerSpec(input_dim=4, class_count=3, learning_rate=0.2, seed=3)


def _dataset(count: int = 30, seed: int = 0) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    labels = rng.integers(3, size=count)
    return LabeledDataset(rng.normal(size=(count, 4)) + labels[:, None], labels, 3)


def _random_params(seed: int, scale: float = 0.5) -> ParameterVector:
    return ParameterVector(np.random.default_rng(seed).normal(scale=scale, size=4 * 3 + 3))


def _numerical_gradient(loss, params: ParameterVector, step: float = 1e-6) -> np.ndarray:
    gradient = np.zeros(params.dim)
    for index in range(params.dim):
        offset = np.zeros(params.dim)
        offset[index] = step
        upper = loss(ParameterVector(params.values + offset))
        lower = loss(ParameterVector(params.values - offset))
        gradient[index] = (upper - lower) / (2 * step)
    return gradient


class TestFedProx(unittest.TestCase):

    def setUp(self):
        self.trainer = LocalTrainer(SPEC)
        self.data = _dataset()
        self.w_global = _random_params(1)

    def test_zero_mu_returns_the_local_objective(self):
        params = _random_params(2)
        base_loss, base_grad = self.trainer.loss_and_grad(params, self.data)
        loss, grad = fedprox_objective(base_loss, base_grad, params, self.w_global, 0.0)
        self.assertEqual(base_loss, loss)
        self.assertEqual(base_grad, grad)

    def test_hand_example(self):
        loss, grad = fedprox_objective(1.0, ParameterVector([0.5, 0.5]), ParameterVector([1.0, 3.0]),
                                       ParameterVector([0.0, 1.0]), 0.5)
        self.assertAlmostEqual(1.0 + 0.25 * 5.0, loss, places=14)
        np.testing.assert_allclose(grad.values, [1.0, 1.5], rtol=1e-14)

    @parameterized.expand([[f'seed_{seed}', seed] for seed in range(100)])
    def test_gradient_matches_finite_differences(self, name, seed):  # pylint: disable=unused-argument
        rng = np.random.default_rng(seed)
        mu = float(rng.uniform(0.0, 3.0))
        params, w_global = _random_params(1000 + seed), _random_params(2000 + seed)
        data = _dataset(count=int(rng.integers(4, 31)), seed=seed)

        def loss(candidate):
            base_loss, base_grad = self.trainer.loss_and_grad(candidate, data)
            return fedprox_objective(base_loss, base_grad, candidate, w_global, mu)[0]

        base_loss, base_grad = self.trainer.loss_and_grad(params, data)
        _, grad = fedprox_objective(base_loss, base_grad, params, w_global, mu)
        np.testing.assert_allclose(grad.values, _numerical_gradient(loss, params), rtol=1e-5, atol=1e-7)

    def test_negative_mu(self):
        with self.assertRaises(ValueError):
            fedprox_objective(0.0, ParameterVector([0.0]), ParameterVector([0.0]), ParameterVector([0.0]), -1.0)


class TestContrastiveDivergence(unittest.TestCase):

    def test_kl_divergence_conventions(self):
        self.assertEqual(0.0, kl_divergence([0.5, 0.5], [0.5, 0.5]))
        self.assertAlmostEqual(np.log(2.0), kl_divergence([1.0, 0.0], [0.5, 0.5]), places=14)
        # Zero mass in q is floored, never infinite.
        self.assertTrue(np.isfinite(kl_divergence([0.5, 0.5], [1.0, 0.0])))
        with self.assertRaises(ValueError):
            kl_divergence([1.0], [0.5, 0.5])

    def test_signed_per_sample_oracle(self):
        learner = PredictionBatch([[0.7, 0.2, 0.1], [0.3, 0.3, 0.4]], [0, 1])
        # The reference is right on the first sample and wrong on the second.
        reference = PredictionBatch([[0.6, 0.3, 0.1], [0.5, 0.2, 0.3]], [0, 1])
        k_1 = kl_divergence(learner.probs[0], reference.probs[0])
        k_2 = kl_divergence(learner.probs[1], reference.probs[1])
        self.assertAlmostEqual((k_1 - k_2) / 2, contrastive_kl(learner, reference), places=14)

    def test_per_sample_cap(self):
        learner = PredictionBatch([[1.0, 0.0]], [0])
        reference = PredictionBatch([[1e-30, 1.0]], [0])
        # Reference is wrong, so the capped divergence enters with a negative sign.
        self.assertEqual(-0.5, contrastive_kl(learner, reference, kl_cap=0.5))

    def test_region_mask(self):
        learner = PredictionBatch([[0.9, 0.1], [0.2, 0.8]], [0, 1], [False, True])
        reference = PredictionBatch([[0.5, 0.5], [0.4, 0.6]], [0, 1], [False, True])
        expected = kl_divergence([0.2, 0.8], [0.4, 0.6])
        self.assertAlmostEqual(expected, contrastive_kl(learner, reference), places=14)
        empty_learner = PredictionBatch([[0.9, 0.1]], [0], [False])
        empty_reference = PredictionBatch([[0.5, 0.5]], [0], [False])
        self.assertEqual(0.0, contrastive_kl(empty_learner, empty_reference))

    @parameterized.expand([
        ['not_a_distribution', [[0.5, 0.6]], [0]],
        ['label_out_of_range', [[0.5, 0.5]], [2]],
        ['misaligned', [[0.5, 0.5]], [0, 1]],
    ])
    def test_invalid_batches(self, name, probs, labels):  # pylint: disable=unused-argument
        with self.assertRaises(ValueError):
            PredictionBatch(probs, labels)

    def test_misaligned_labels(self):
        with self.assertRaises(ValueError):
            contrastive_kl(PredictionBatch([[0.5, 0.5]], [0]), PredictionBatch([[0.5, 0.5]], [1]))


class TestMutualLearning(unittest.TestCase):

    def setUp(self):
        self.trainer = LocalTrainer(SPEC)
        self.data = _dataset(seed=2)

    def test_training_loss_matches_numpy_divergence(self):
        params, reference = _random_params(5), _random_params(6)
        loss, _ = self.trainer.contrastive_loss_and_grad(params, reference, self.data, 1.0)
        expected = contrastive_kl(self.trainer.predict_proba(params, self.data),
                                  self.trainer.predict_proba(reference, self.data))
        self.assertAlmostEqual(expected, loss, places=12)

    @parameterized.expand([['mixed', 0.5], ['contrastive_only', 1.0]])
    def test_gradient_matches_finite_differences(self, name, lam):  # pylint: disable=unused-argument
        params, reference = _random_params(7, 0.1), _random_params(8, 0.1)
        _, grad = self.trainer.contrastive_loss_and_grad(params, reference, self.data, lam)
        numerical = _numerical_gradient(
            lambda candidate: self.trainer.contrastive_loss_and_grad(candidate, reference, self.data, lam)[0], params)
        np.testing.assert_allclose(grad.values, numerical, rtol=1e-5, atol=1e-7)

    def test_zero_lambda_is_plain_gradient_descent(self):
        w_r, w_s = _random_params(9), _random_params(10)
        new_r, new_s = dcml_step(w_r, w_s, self.data, 0.0, 0.3, self.trainer)
        self.assertEqual(axpy(-0.3, self.trainer.loss_and_grad(w_r, self.data)[1], w_r), new_r)
        self.assertEqual(axpy(-0.3, self.trainer.loss_and_grad(w_s, self.data)[1], w_s), new_s)

    def test_both_models_use_the_pre_step_peer(self):
        w_r, w_s = _random_params(11), _random_params(12)
        new_r, new_s = dcml_step(w_r, w_s, self.data, 0.5, 0.3, self.trainer)
        grad_s = self.trainer.contrastive_loss_and_grad(w_s, w_r, self.data, 0.5)[1]
        self.assertEqual(axpy(-0.3, grad_s, w_s), new_s)
        grad_r = self.trainer.contrastive_loss_and_grad(w_r, w_s, self.data, 0.5)[1]
        self.assertEqual(axpy(-0.3, grad_r, w_r), new_r)

    @parameterized.expand([['lambda_high', 1.5, 0.1], ['lambda_negative', -0.1, 0.1], ['eta_zero', 0.5, 0.0]])
    def test_invalid_arguments(self, name, lam, eta):  # pylint: disable=unused-argument
        params = _random_params(0)
        with self.assertRaises(ValueError):
            dcml_step(params, params, self.data, lam, eta, self.trainer)
