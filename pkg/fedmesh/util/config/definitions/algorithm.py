from enum import unique

from fedmesh.util.config.definitions.base import CaseInsensitiveEnum


@unique
class Algorithm(CaseInsensitiveEnum):
    fedavg = 'FedAvg'
    fedprox = 'FedProx'
    gcml = 'GCML'
    individual = 'Individual'
    pooled = 'Pooled'

    def is_centralized(self) -> bool:
        return self in (Algorithm.fedavg, Algorithm.fedprox)
