import os

import numpy as np
import torch


def init_reproducibility(seed: int = 42) -> None:
    """
    Function to pre-set the global seeds of the libraries used during training and pin torch to one intra-op thread,
    so that float64 reductions on CPU are evaluated in the same order in every process. Training itself draws from
    explicitly seeded generators only.
    @param seed: Seed for the global generators.
    @type seed: int
    @return: None
    @rtype: None
    """
    torch.manual_seed(seed)
    torch.set_num_threads(1)
    np.random.seed(seed % 2 ** 32)
    os.environ['PYTHONHASHSEED'] = str(seed)
