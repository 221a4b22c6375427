"""
Seed derivation
One master seed fans out into independent, reproducible streams per component
"""

from typing import Tuple

import numpy as np

COMPONENTS = {
    'workload': 0,
    'interference': 1,
    'model': 2,
    'scheduler': 3,
    'cosim': 4,
    # 5 retired; remaining ids are fixed
    'calibration': 6,
}


def component_key(component: str, *counters: int) -> Tuple[int, ...]:
    if component not in COMPONENTS:
        raise KeyError(f"Unknown RNG component '{component}'")
    return (COMPONENTS[component],) + tuple(int(c) for c in counters)


def derive_rng(master_seed: int, component: str, *counters: int) -> np.random.Generator:
    """
    Build the generator for `component` (optionally indexed by counters such as the
    interval number). Streams for different components or counters never overlap.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=component_key(component, *counters))
    return np.random.Generator(np.random.PCG64(seq))
