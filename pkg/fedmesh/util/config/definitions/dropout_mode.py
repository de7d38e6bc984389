from enum import unique

from fedmesh.util.config.definitions.base import CaseInsensitiveEnum


@unique
class DropoutMode(CaseInsensitiveEnum):
    disconnect = 'disconnect'  # local training continues, nothing is communicated
    shutdown = 'shutdown'  # neither training nor communication
