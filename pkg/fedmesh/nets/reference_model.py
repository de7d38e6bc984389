from abc import abstractmethod

import numpy as np
import torch

INIT_SCALE = 0.05


class ReferenceModel(torch.nn.Module):
    """
    Base of the desk-scale models. A model owns no tensors of its own: it reads every weight from a flat parameter
    tensor laid out as the row-major weight matrix followed by the bias terms, so that local training, aggregation and
    exchange all work on the same vector.
    """

    def __init__(self, input_dim: int, output_dim: int):
        super().__init__()
        self.input_dim = input_dim
        self.output_dim = output_dim

    @property
    def weight_count(self) -> int:
        return self.input_dim * self.output_dim

    @property
    def param_count(self) -> int:
        return self.weight_count + self.output_dim

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        weights = rng.uniform(-INIT_SCALE, INIT_SCALE, size=self.weight_count)
        return np.concatenate([weights, np.zeros(self.output_dim)])

    def unpack(self, theta: torch.Tensor):
        weights = theta[:self.weight_count].reshape(self.input_dim, self.output_dim)
        return weights, theta[self.weight_count:]

    def forward(self, theta: torch.Tensor, features: torch.Tensor) -> torch.Tensor:  # pylint: disable=arguments-differ
        weights, bias = self.unpack(theta)
        return features @ weights + bias

    @abstractmethod
    def loss(self, outputs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        """
        Per-sample-mean loss of the model outputs.
        """

    @abstractmethod
    def target_tensor(self, labels: np.ndarray) -> torch.Tensor:
        pass
