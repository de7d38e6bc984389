"""
Local training on flat parameter vectors. Losses and gradients come from torch autograd in float64; the parameter
vectors themselves stay numpy-backed so that they can be aggregated, merged and sent without conversion.
"""
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch

from fedmesh.datasets.dataset import LabeledDataset
from fedmesh.nets import ReferenceModel, get_net
from fedmesh.nets.util.parameters import ParameterError, ParameterVector, axpy
from fedmesh.strategy.optimization.dcml import DEFAULT_KL_CAP, PredictionBatch, contrastive_kl_tensor
from fedmesh.strategy.optimization.fed_prox import fedprox_objective
from fedmesh.util.config.definitions import BatchMode
from fedmesh.util.config.federation import TrainerSpec


class Evaluation(NamedTuple):
    loss: float
    accuracy: Optional[float]


def _as_tensor(values: np.ndarray, requires_grad: bool = False) -> torch.Tensor:
    # Copy first: the vectors are read-only and torch cannot wrap read-only buffers.
    tensor = torch.from_numpy(np.array(values, dtype=np.float64))
    return tensor.requires_grad_(requires_grad)


class LocalTrainer:
    """
    Trainer of one site, bound to a `TrainerSpec`. Stateless apart from the spec, so a single instance may serve
    concurrent callers.
    """

    def __init__(self, spec: TrainerSpec):
        self.spec = spec
        self.model: ReferenceModel = get_net(spec.model_kind)(spec.input_dim, spec.class_count)

    @property
    def learning_rate(self) -> float:
        return self.spec.learning_rate

    @property
    def param_count(self) -> int:
        return self.model.param_count

    def _check(self, params: ParameterVector, data: LabeledDataset) -> None:
        if len(data) == 0:
            raise ValueError('dataset is empty')
        if params.dim != self.param_count:
            raise ParameterError(f'params have dim {params.dim}, the {self.spec.model_kind.value} layout '
                                 f'needs {self.param_count}')
        if data.input_dim != self.spec.input_dim:
            raise ValueError(f'data has {data.input_dim} features, the trainer expects {self.spec.input_dim}')

    def init_params(self) -> ParameterVector:
        rng = np.random.default_rng(self.spec.seed)
        return ParameterVector(self.model.init_params(rng))

    def _objective(self, theta: torch.Tensor, data: LabeledDataset) -> torch.Tensor:
        outputs = self.model(theta, data.feature_tensor)
        return self.model.loss(outputs, self.model.target_tensor(data.labels))

    def loss_and_grad(self, params: ParameterVector, data: LabeledDataset) -> Tuple[float, ParameterVector]:
        self._check(params, data)
        theta = _as_tensor(params.values, requires_grad=True)
        loss = self._objective(theta, data)
        (grad,) = torch.autograd.grad(loss, theta)
        return float(loss.item()), ParameterVector(grad.numpy())

    def contrastive_loss_and_grad(self, params: ParameterVector, reference: ParameterVector, data: LabeledDataset,
                                  lam: float, kl_cap: float = DEFAULT_KL_CAP) -> Tuple[float, ParameterVector]:
        """
        Loss and gradient of (1 - lam) * task loss + lam * contrastive divergence from `reference`, both on `data`.
        With lam = 0 this is exactly `loss_and_grad`.
        """
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f'lambda must lie in [0, 1], got {lam}')
        if lam == 0:
            return self.loss_and_grad(params, data)
        if not self.spec.is_classifier:
            raise ValueError('the contrastive objective needs a classifier')
        self._check(params, data)
        self._check(reference, data)
        theta = _as_tensor(params.values, requires_grad=True)
        features = data.feature_tensor
        labels = self.model.target_tensor(data.labels)
        logits = self.model(theta, features)
        with torch.no_grad():
            reference_probs = torch.softmax(self.model(_as_tensor(reference.values), features), dim=1)
        region = torch.ones(len(data), dtype=torch.bool)
        loss = (1.0 - lam) * self.model.loss(logits, labels) + \
            lam * contrastive_kl_tensor(logits, reference_probs, labels, region, kl_cap)
        (grad,) = torch.autograd.grad(loss, theta)
        return float(loss.item()), ParameterVector(grad.numpy())

    def _batches(self, data: LabeledDataset, shuffle_key: Sequence[int], epoch: int):
        if self.spec.batch_mode is BatchMode.full_batch:
            yield data
            return
        rng = np.random.default_rng([self.spec.seed, *shuffle_key, epoch])
        order = rng.permutation(len(data))
        for start in range(0, len(order), self.spec.batch_size):
            yield data.subset(order[start:start + self.spec.batch_size])

    def train_rounds(self, params: ParameterVector, train_data: LabeledDataset, mu: float = 0.0,
                     w_global: Optional[ParameterVector] = None, shuffle_key: Sequence[int] = ()) -> ParameterVector:
        """
        Run `epochs_per_round` epochs of gradient descent starting from `params`.
        @param params: Starting parameters.
        @type params: ParameterVector
        @param train_data: Local training split.
        @type train_data: LabeledDataset
        @param mu: Proximal strength; positive values train on the FedProx objective around `w_global`.
        @type mu: float
        @param w_global: Global parameters of the round, required when `mu > 0`.
        @type w_global: Optional[ParameterVector]
        @param shuffle_key: Extra seed material for the minibatch permutations, the site id and round.
        @type shuffle_key: Sequence[int]
        @return: Trained parameters.
        @rtype: ParameterVector
        """
        if mu < 0:
            raise ValueError(f'mu must be nonnegative, got {mu}')
        if mu > 0 and w_global is None:
            raise ValueError('mu > 0 requires the global parameters w_global')
        self._check(params, train_data)
        for epoch in range(self.spec.epochs_per_round):
            for batch in self._batches(train_data, shuffle_key, epoch):
                loss, grad = self.loss_and_grad(params, batch)
                if mu > 0:
                    loss, grad = fedprox_objective(loss, grad, params, w_global, mu)
                params = axpy(-self.spec.learning_rate, grad, params)
        return params

    def evaluate(self, params: ParameterVector, data: LabeledDataset) -> Evaluation:
        self._check(params, data)
        with torch.no_grad():
            theta = _as_tensor(params.values)
            outputs = self.model(theta, data.feature_tensor)
            loss = float(self.model.loss(outputs, self.model.target_tensor(data.labels)).item())
            accuracy = None
            if self.spec.is_classifier:
                predictions = torch.argmax(outputs, dim=1).numpy()
                accuracy = float(np.mean(predictions == data.labels))
        return Evaluation(loss, accuracy)

    def predict_proba(self, params: ParameterVector, data: LabeledDataset,
                      region_mask: Optional[np.ndarray] = None) -> PredictionBatch:
        if not self.spec.is_classifier:
            raise ValueError('predict_proba needs a classifier, the trainer is configured for regression')
        self._check(params, data)
        with torch.no_grad():
            probs = torch.softmax(self.model(_as_tensor(params.values), data.feature_tensor), dim=1).numpy()
        return PredictionBatch(probs, data.labels, region_mask)


def init_params(spec: TrainerSpec) -> ParameterVector:
    return LocalTrainer(spec).init_params()


def loss_and_grad(spec: TrainerSpec, params: ParameterVector, data: LabeledDataset) -> Tuple[float, ParameterVector]:
    return LocalTrainer(spec).loss_and_grad(params, data)


def train_rounds(spec: TrainerSpec, params: ParameterVector, train_data: LabeledDataset, mu: float = 0.0,
                 w_global: Optional[ParameterVector] = None, shuffle_key: Sequence[int] = ()) -> ParameterVector:
    return LocalTrainer(spec).train_rounds(params, train_data, mu, w_global, shuffle_key)


def evaluate(spec: TrainerSpec, params: ParameterVector, data: LabeledDataset) -> Evaluation:
    return LocalTrainer(spec).evaluate(params, data)


def predict_proba(spec: TrainerSpec, params: ParameterVector, data: LabeledDataset,
                  region_mask: Optional[np.ndarray] = None) -> PredictionBatch:
    return LocalTrainer(spec).predict_proba(params, data, region_mask)
