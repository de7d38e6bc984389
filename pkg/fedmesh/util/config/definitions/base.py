from enum import Enum


class CaseInsensitiveEnum(Enum):
    """
    Enum base that resolves members by value or by name, ignoring capitalization. Configuration files written by hand
    use `FedAvg`, `fedavg` and `FEDAVG` interchangeably.
    """

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            lowered = value.lower()
            for member in cls:
                if str(member.value).lower() == lowered or member.name.lower() == lowered:
                    return member
        return None
