from dataclasses import dataclass, replace
from typing import FrozenSet, Iterable, List, Tuple

import numpy as np

from fedmesh.util.config.definitions import DropoutMode


@dataclass(frozen=True)
class DropoutState:
    """
    State of the site drop-out random walk. The number of active sites stays within
    [n_total - n_max, n_total].
    """
    site_ids: Tuple[int, ...]
    n_max: int
    mode: DropoutMode = DropoutMode.disconnect
    dropped: FrozenSet[int] = frozenset()

    def __post_init__(self):
        if not 0 <= self.n_max <= len(self.site_ids):
            raise ValueError(f'n_max must lie in [0, {len(self.site_ids)}], got {self.n_max}')
        if not self.dropped <= set(self.site_ids):
            raise ValueError(f'dropped sites {sorted(self.dropped - set(self.site_ids))} are not federation members')
        if len(self.dropped) > self.n_max:
            raise ValueError(f'{len(self.dropped)} dropped sites exceed n_max={self.n_max}')

    @classmethod
    def initial(cls, site_ids: Iterable[int], n_max: int, mode: DropoutMode = DropoutMode.disconnect) -> 'DropoutState':
        return cls(tuple(sorted(site_ids)), n_max, DropoutMode(mode))

    @property
    def n_total(self) -> int:
        return len(self.site_ids)

    @property
    def n_current(self) -> int:
        return self.n_total - len(self.dropped)

    @property
    def active(self) -> List[int]:
        return [site_id for site_id in self.site_ids if site_id not in self.dropped]

    def is_active(self, site_id: int) -> bool:
        return site_id not in self.dropped


def dropout_step(state: DropoutState, rng: np.random.Generator) -> DropoutState:
    """
    Advance the drop-out walk by one round. With every site active, one site drops with probability 1/2; at the
    capacity floor, one dropped site rejoins with probability 1/2; in between, drop, rejoin and no change each have
    probability 1/3. Dropping and rejoining sites are picked uniformly. Without drop capacity the state is returned
    unchanged and the generator is not advanced.
    @param state: Current state.
    @type state: DropoutState
    @param rng: Generator driving the walk.
    @type rng: np.random.Generator
    @return: State of the next round.
    @rtype: DropoutState
    """
    can_drop = state.n_current > state.n_total - state.n_max
    can_rejoin = state.n_current < state.n_total
    moves = [move for move, allowed in (('drop', can_drop), ('rejoin', can_rejoin)) if allowed]
    if not moves:
        return state
    moves.append('stay')
    move = moves[int(rng.integers(len(moves)))]
    if move == 'drop':
        active = state.active
        leaving = active[int(rng.integers(len(active)))]
        return replace(state, dropped=state.dropped | {leaving})
    if move == 'rejoin':
        dropped = sorted(state.dropped)
        joining = dropped[int(rng.integers(len(dropped)))]
        return replace(state, dropped=state.dropped - {joining})
    return state
