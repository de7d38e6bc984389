from typing import Optional

import numpy as np

from fedmesh.datasets.dataset import FederatedDataset, LabeledDataset
from fedmesh.util.config.definitions import SkewKind, TaskKind
from fedmesh.util.config.layout import FederationLayout, TaskSpec


class _TaskSampler:
    """
    Draws samples of one synthetic task. The task itself (cluster means or the true linear map) is fixed at
    construction from its own generator, so every partition shares it.
    """

    def __init__(self, task: TaskSpec, rng: np.random.Generator):
        self.task = task
        if task.kind is TaskKind.classification:
            self.means = rng.normal(0.0, task.separation, size=(task.classes, task.features))
        else:
            self.weights = rng.normal(0.0, 1.0, size=task.features)
            self.bias = float(rng.normal())

    def sample(self, count: int, rng: np.random.Generator, shift: np.ndarray) -> LabeledDataset:
        task = self.task
        if task.kind is TaskKind.classification:
            labels = rng.integers(task.classes, size=count)
            features = self.means[labels] + rng.standard_normal((count, task.features)) + shift
            return LabeledDataset(features, labels, task.classes)
        features = rng.standard_normal((count, task.features)) + shift
        targets = features @ self.weights + self.bias + task.noise * rng.standard_normal(count)
        return LabeledDataset(features, targets)


def _site_shift(layout: FederationLayout, index: int, rng: np.random.Generator, features: int) -> np.ndarray:
    if layout.skew.kind is not SkewKind.feature or layout.skew.shifts[index] == 0:
        return np.zeros(features)
    direction = rng.standard_normal(features)
    return layout.skew.shifts[index] * direction / np.linalg.norm(direction)


def generate_federation(layout: FederationLayout, task: Optional[TaskSpec] = None) -> FederatedDataset:
    """
    Generate the synthetic federation described by a layout. Site i receives `train_counts[i]` training and
    `val_counts[i]` validation samples; under feature skew its features are shifted by `shifts[i]` along a random unit
    direction. The shared test set is drawn from the unshifted distribution. Output is a pure function of the layout.
    @param layout: Federation layout, including the seed.
    @type layout: FederationLayout
    @param task: Task overriding the one of the layout.
    @type task: Optional[TaskSpec]
    @return: Per-site partitions and the shared test set.
    @rtype: FederatedDataset
    """
    layout.validate()
    task = task or layout.task
    streams = np.random.SeedSequence(layout.seed).spawn(layout.site_count + 2)
    sampler = _TaskSampler(task, np.random.default_rng(streams[0]))
    train, validation = [], []
    for index in range(layout.site_count):
        rng = np.random.default_rng(streams[index + 2])
        shift = _site_shift(layout, index, rng, task.features)
        train.append(sampler.sample(layout.train_counts[index], rng, shift))
        validation.append(sampler.sample(layout.val_counts[index], rng, shift))
    test = sampler.sample(layout.test_count, np.random.default_rng(streams[1]), np.zeros(task.features))
    return FederatedDataset(tuple(train), tuple(validation), test)
