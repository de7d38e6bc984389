from enum import unique

from fedmesh.util.config.definitions.base import CaseInsensitiveEnum


@unique
class TaskKind(CaseInsensitiveEnum):
    classification = 'classification'
    regression = 'regression'


@unique
class SkewKind(CaseInsensitiveEnum):
    iid = 'iid'
    quantity = 'quantity'
    feature = 'feature'
