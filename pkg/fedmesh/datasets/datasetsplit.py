import math
from typing import Tuple

import numpy as np

from fedmesh.datasets.dataset import LabeledDataset


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def split_site_data(cases: LabeledDataset, fractions: Tuple[float, float, float] = (0.7, 0.1, 0.2),
                    seed: int = 0) -> Tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """
    Split the cases of one site into train, validation and test partitions after a seeded shuffle. Validation and test
    receive round(fraction * n) cases, at least one each; train keeps the remainder.
    @param cases: All cases of the site.
    @type cases: LabeledDataset
    @param fractions: Train, validation and test fractions, positive and summing to 1.
    @type fractions: Tuple[float, float, float]
    @param seed: Shuffle seed.
    @type seed: int
    @return: Train, validation and test partitions, disjoint and together exhaustive.
    @rtype: Tuple[LabeledDataset, LabeledDataset, LabeledDataset]
    """
    if len(fractions) != 3 or any(fraction <= 0 for fraction in fractions):
        raise ValueError(f'expected three positive fractions, got {fractions}')
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f'fractions must sum to 1, got {sum(fractions)}')
    count = len(cases)
    if count < 3:
        raise ValueError(f'need at least 3 cases to populate train, validation and test, got {count}')
    val_count = max(1, _round_half_up(fractions[1] * count))
    test_count = max(1, _round_half_up(fractions[2] * count))
    while count - val_count - test_count < 1:
        if val_count >= test_count:
            val_count -= 1
        else:
            test_count -= 1
    order = np.random.default_rng(seed).permutation(count)
    train_end = count - val_count - test_count
    return (cases.subset(order[:train_end]),
            cases.subset(order[train_end:train_end + val_count]),
            cases.subset(order[train_end + val_count:]))
