from enum import unique

from fedmesh.util.config.definitions.base import CaseInsensitiveEnum


@unique
class ModelKind(CaseInsensitiveEnum):
    linear_regression = 'linear_regression'
    softmax_classifier = 'softmax_classifier'


@unique
class BatchMode(CaseInsensitiveEnum):
    full_batch = 'full_batch'
    minibatch = 'minibatch'
