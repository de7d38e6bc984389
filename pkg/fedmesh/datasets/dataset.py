from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
import torch


class LabeledDataset:
    """
    Immutable labelled samples: an n x d float64 feature matrix and n labels, class indices (int64) when
    `class_count` is set and real-valued targets otherwise.
    """

    def __init__(self, features, labels, class_count: Optional[int] = None):
        features = np.array(features, dtype=np.float64)
        if features.ndim == 1 and features.size == 0:
            features = features.reshape(0, 0)
        if features.ndim != 2:
            raise ValueError(f'features must be an n x d matrix, got shape {features.shape}')
        if class_count is None:
            labels = np.array(labels, dtype=np.float64).reshape(-1)
        else:
            labels = np.array(labels, dtype=np.int64).reshape(-1)
            if len(labels) and (labels.min() < 0 or labels.max() >= class_count):
                raise ValueError(f'class indices must lie in [0, {class_count})')
        if len(labels) != len(features):
            raise ValueError(f'{len(features)} feature rows but {len(labels)} labels')
        features.setflags(write=False)
        labels.setflags(write=False)
        self._features = features
        self._labels = labels
        self.class_count = class_count

    @property
    def features(self) -> np.ndarray:
        return self._features

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def input_dim(self) -> int:
        return self._features.shape[1]

    @property
    def is_classification(self) -> bool:
        return self.class_count is not None

    def __len__(self) -> int:
        return len(self._labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return self.class_count == other.class_count and \
            self._features.shape == other._features.shape and \
            self._features.tobytes() == other._features.tobytes() and \
            self._labels.dtype == other._labels.dtype and \
            self._labels.tobytes() == other._labels.tobytes()

    def __hash__(self) -> int:
        return hash((self._features.tobytes(), self._labels.tobytes(), self.class_count))

    def __repr__(self) -> str:
        return f'LabeledDataset(n={len(self)}, d={self.input_dim}, class_count={self.class_count})'

    def subset(self, indices: Sequence[int]) -> 'LabeledDataset':
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self._features[indices].reshape(len(indices), self.input_dim), self._labels[indices],
                              self.class_count)

    def repeated(self, times: int) -> 'LabeledDataset':
        return LabeledDataset(np.tile(self._features, (times, 1)), np.tile(self._labels, times), self.class_count)

    @staticmethod
    def concat(datasets: Sequence['LabeledDataset']) -> 'LabeledDataset':
        if not datasets:
            raise ValueError('cannot concatenate an empty list of datasets')
        return LabeledDataset(np.concatenate([dataset.features for dataset in datasets]),
                              np.concatenate([dataset.labels for dataset in datasets]),
                              datasets[0].class_count)

    @cached_property
    def feature_tensor(self) -> torch.Tensor:
        return torch.from_numpy(np.array(self._features))


@dataclass(frozen=True)
class FederatedDataset:
    """
    Per-site train and validation partitions, index-aligned with the configured sites, plus the shared test set.
    """
    train: Tuple[LabeledDataset, ...]
    validation: Tuple[LabeledDataset, ...]
    test: LabeledDataset

    def __post_init__(self):
        if len(self.train) != len(self.validation):
            raise ValueError(f'{len(self.train)} train partitions but {len(self.validation)} validation partitions')
        dims = {partition.input_dim for partition in (*self.train, *self.validation, self.test)}
        if len(dims) > 1:
            raise ValueError(f'feature dimension differs across partitions: {sorted(dims)}')

    @property
    def site_count(self) -> int:
        return len(self.train)

    def union_train(self) -> LabeledDataset:
        return LabeledDataset.concat(self.train)

    def union_validation(self) -> LabeledDataset:
        return LabeledDataset.concat(self.validation)
