"""
Contrastive mutual learning between a receiver's model and an incoming peer model.
"""
from dataclasses import dataclass, field
from typing import Optional, Protocol, Tuple

import numpy as np
import torch
from scipy.special import rel_entr

from fedmesh.nets.util.parameters import ParameterVector, axpy

PROBABILITY_FLOOR = 1e-12
DEFAULT_KL_CAP = 10.0


@dataclass(frozen=True)
class PredictionBatch:
    """
    Class probabilities of one model on a batch, aligned with the true labels and the in-region flags.
    """
    probs: np.ndarray
    labels: np.ndarray
    region_mask: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if probs.ndim != 2:
            raise ValueError(f'probs must be a 2-D array, got shape {probs.shape}')
        mask = np.ones(len(labels), dtype=bool) if self.region_mask is None \
            else np.array(self.region_mask, dtype=bool).reshape(-1)
        if not len(probs) == len(labels) == len(mask):
            raise ValueError(f'misaligned batch: {len(probs)} rows, {len(labels)} labels, {len(mask)} mask flags')
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError('every row of probs must be a probability distribution')
        if len(labels) and (labels.min() < 0 or labels.max() >= probs.shape[1]):
            raise ValueError(f'labels must lie in [0, {probs.shape[1]})')
        for array in (probs, labels, mask):
            array.setflags(write=False)
        object.__setattr__(self, 'probs', probs)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'region_mask', mask)

    def __len__(self):
        return len(self.labels)

    @property
    def class_count(self) -> int:
        return self.probs.shape[1]


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """
    KL(p || q) with 0 * log(0 / q) = 0 and q clamped below at 1e-12.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f'length mismatch: {p.shape} != {q.shape}')
    return float(np.sum(rel_entr(p, np.maximum(q, PROBABILITY_FLOOR))))


def _check_aligned(learner: PredictionBatch, reference: PredictionBatch) -> None:
    if learner.probs.shape != reference.probs.shape:
        raise ValueError(f'prediction shapes differ: {learner.probs.shape} != {reference.probs.shape}')
    if not np.array_equal(learner.labels, reference.labels):
        raise ValueError('prediction batches carry different labels')
    if not np.array_equal(learner.region_mask, reference.region_mask):
        raise ValueError('prediction batches carry different region masks')


def contrastive_kl(learner: PredictionBatch, reference: PredictionBatch, kl_cap: float = DEFAULT_KL_CAP) -> float:
    """
    Signed, capped mean KL over in-region samples. A sample pulls the learner toward the reference (+KL) where the
    reference predicts the true label and pushes it away (-KL) where it does not.
    @param learner: Predictions of the model being trained.
    @type learner: PredictionBatch
    @param reference: Predictions of the reference model, whose correctness sets the sign.
    @type reference: PredictionBatch
    @param kl_cap: Per-sample cap on the divergence.
    @type kl_cap: float
    @return: Contrastive divergence, 0 for an empty region.
    @rtype: float
    """
    _check_aligned(learner, reference)
    mask = learner.region_mask
    if not mask.any():
        return 0.0
    per_sample = np.sum(rel_entr(learner.probs[mask], np.maximum(reference.probs[mask], PROBABILITY_FLOOR)),
                        axis=1)
    signs = np.where(np.argmax(reference.probs[mask], axis=1) == learner.labels[mask], 1.0, -1.0)
    return float(np.mean(signs * np.minimum(per_sample, kl_cap)))


def contrastive_kl_tensor(logits: torch.Tensor, reference_probs: torch.Tensor, labels: torch.Tensor,
                          region_mask: torch.Tensor, kl_cap: float = DEFAULT_KL_CAP) -> torch.Tensor:
    """
    Differentiable counterpart of `contrastive_kl` taking the learner's logits. The reference is treated as a
    constant.
    """
    reference_probs = reference_probs.detach()
    log_probs = torch.log_softmax(logits, dim=1)
    log_reference = torch.log(torch.clamp(reference_probs, min=PROBABILITY_FLOOR))
    per_sample = torch.sum(log_probs.exp() * (log_probs - log_reference), dim=1)
    capped = torch.clamp(per_sample, max=kl_cap)
    signs = torch.where(torch.argmax(reference_probs, dim=1) == labels,
                        torch.ones_like(capped), -torch.ones_like(capped))
    if not bool(region_mask.any()):
        # Keeps the graph connected so a lambda = 1 objective still differentiates to zero.
        return (capped * 0.0).sum()
    return torch.mean((signs * capped)[region_mask])


class MutualLearner(Protocol):
    """
    Local-training interface required by `dcml_step`.
    """
    learning_rate: float

    def contrastive_loss_and_grad(self, params: ParameterVector, reference: ParameterVector, data, lam: float,
                                  kl_cap: float) -> Tuple[float, ParameterVector]:
        ...


def dcml_step(w_r: ParameterVector, w_s: ParameterVector, local_batch, lam: float, eta_r: float,
              trainer: MutualLearner, kl_cap: float = DEFAULT_KL_CAP) -> Tuple[ParameterVector, ParameterVector]:
    """
    One mutual-learning step on the receiver's data. Each model minimizes (1 - lam) times the receiver's task loss plus
    lam times its contrastive divergence from the other model, and takes one gradient step of rate `eta_r`.
    @param w_r: Receiver model.
    @type w_r: ParameterVector
    @param w_s: Incoming sender model.
    @type w_s: ParameterVector
    @param local_batch: Receiver training data.
    @type local_batch: LabeledDataset
    @param lam: Weight of the contrastive term, in [0, 1].
    @type lam: float
    @param eta_r: Receiver learning rate.
    @type eta_r: float
    @param trainer: Receiver trainer.
    @type trainer: MutualLearner
    @param kl_cap: Per-sample divergence cap.
    @type kl_cap: float
    @return: Updated receiver and sender models.
    @rtype: Tuple[ParameterVector, ParameterVector]
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f'lambda must lie in [0, 1], got {lam}')
    if not eta_r > 0:
        raise ValueError(f'eta_r must be positive, got {eta_r}')
    _, grad_r = trainer.contrastive_loss_and_grad(w_r, w_s, local_batch, lam, kl_cap)
    _, grad_s = trainer.contrastive_loss_and_grad(w_s, w_r, local_batch, lam, kl_cap)
    return axpy(-eta_r, grad_r, w_r), axpy(-eta_r, grad_s, w_s)
