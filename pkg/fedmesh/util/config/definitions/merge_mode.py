from enum import unique

from fedmesh.util.config.definitions.base import CaseInsensitiveEnum


@unique
class MergeMode(CaseInsensitiveEnum):
    # Weights are the raw validation losses, as the update rule is written.
    loss_weighted = 'loss_weighted'
    # Weights are the reciprocal validation losses.
    inverse = 'inverse'
