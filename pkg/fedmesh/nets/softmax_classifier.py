import numpy as np
import torch
import torch.nn.functional as F

from fedmesh.nets.reference_model import ReferenceModel


class SoftmaxClassifier(ReferenceModel):

    def __init__(self, input_dim: int, class_count: int):
        super().__init__(input_dim, class_count)

    def loss(self, outputs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        return F.cross_entropy(outputs, targets)

    def target_tensor(self, labels: np.ndarray) -> torch.Tensor:
        return torch.from_numpy(np.array(labels, dtype=np.int64))
