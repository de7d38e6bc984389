import numpy as np
import torch

from fedmesh.nets.reference_model import ReferenceModel


class LinearRegression(ReferenceModel):

    def __init__(self, input_dim: int, class_count=None):  # pylint: disable=unused-argument
        super().__init__(input_dim, 1)

    def forward(self, theta: torch.Tensor, features: torch.Tensor) -> torch.Tensor:  # pylint: disable=arguments-differ
        return super().forward(theta, features).reshape(-1)

    def loss(self, outputs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        return torch.mean((outputs - targets) ** 2)

    def target_tensor(self, labels: np.ndarray) -> torch.Tensor:
        return torch.from_numpy(np.array(labels, dtype=np.float64))
