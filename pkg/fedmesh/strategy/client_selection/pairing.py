from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class RoundPairing:
    pairs: Tuple[Tuple[int, int], ...]
    idle: Tuple[int, ...]

    def peer_of(self, site_id: int) -> Optional[int]:
        for sender, receiver in self.pairs:
            if site_id == sender:
                return receiver
            if site_id == receiver:
                return sender
        return None

    @property
    def senders(self) -> List[int]:
        return [sender for sender, _ in self.pairs]

    @property
    def receivers(self) -> List[int]:
        return [receiver for _, receiver in self.pairs]


def pair_active_sites(active: Iterable[int], rng: np.random.Generator) -> RoundPairing:
    """
    Function to pair the active sites of a round into sender/receiver couples. The sites are shuffled uniformly and
    consecutive sites form a pair, the first sending to the second. With an odd count the last site idles.
    @param active: Ids of the sites that are active this round.
    @type active: Iterable[int]
    @param rng: Generator driving the shuffle.
    @type rng: np.random.Generator
    @return: Pairs and idle sites of the round.
    @rtype: RoundPairing
    """
    # Sorted first so the shuffle only depends on the set of ids and the generator state.
    active = sorted(active)
    if not active:
        raise ValueError('cannot pair an empty list of active sites')
    if len(set(active)) != len(active):
        raise ValueError(f'duplicate site ids in {active}')
    order = [active[index] for index in rng.permutation(len(active))]
    pairs = tuple((order[position], order[position + 1]) for position in range(0, len(order) - 1, 2))
    idle = tuple(order[len(pairs) * 2:])
    return RoundPairing(pairs, idle)
