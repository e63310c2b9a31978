"""
Reproducible random streams and an index-ordered parallel map.

Each replicate draws from a generator keyed by (root seed, stage, index), so
results do not depend on scheduling or on the number of worker threads.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

import numpy as np

from src.exceptions import ParameterError

T = TypeVar("T")
R = TypeVar("R")

# stage tags of the spawn key
STAGE_NETWORK = 0
STAGE_TREATMENT = 1
STAGE_SAMPLE = 2
STAGE_OUTCOME = 3
STAGE_BOOTSTRAP = 4


def replicate_rng(seed: int, stage: int, index: int = 0) -> np.random.Generator:
    """Independent generator for one (stage, index) pair under a root seed."""
    if seed < 0:
        raise ParameterError(f"seed must be nonnegative, got {seed}")
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stage, index)))


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
    """
    Apply `fn` to every item, results in input order.

    threads=1 runs inline. The first exception raised by any item propagates.
    """
    if threads < 1:
        raise ParameterError(f"threads must be >= 1, got {threads}")
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
