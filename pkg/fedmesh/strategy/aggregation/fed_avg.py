# pylint: disable=invalid-name
from dataclasses import dataclass
from typing import Sequence

from fedmesh.nets.util.parameters import ParameterError, ParameterVector, weighted_mean


@dataclass(frozen=True)
class SiteUpdate:
    site_id: int
    case_count: int
    params: ParameterVector

    def __post_init__(self):
        if self.case_count < 1:
            raise ParameterError(f'site {self.site_id} reported case_count {self.case_count}, expected >= 1')


def fedavg_aggregate(updates: Sequence[SiteUpdate]) -> ParameterVector:
    """
    Function to perform FederatedAveraging on the updates received in a round. Weights are the local case counts, so
    the normalizing total only covers sites that actually submitted.
    @param updates: Updates received this round, in a deterministic order.
    @type updates: Sequence[SiteUpdate]
    @return: New global parameters.
    @rtype: ParameterVector
    """
    if not updates:
        raise ParameterError('no site submitted an update this round')
    return weighted_mean((update.params, update.case_count) for update in updates)
