"""
Workload Generator
Generates the synthetic bag-of-tasks arrival stream: Poisson arrivals per
interval, three application profiles, per-task demand jitter
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.cluster import JITTER_LENGTH, TaskSpec
from ..errors import ParameterError
from ..utils.config import PROFILES, SimConfig
from ..utils.seeding import derive_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AppProfile:
    name: str
    demand: Tuple[float, float, float]
    duration: Tuple[float, float]


PROFILE_TABLE: Dict[str, AppProfile] = {
    'compute': AppProfile('compute', (0.40, 0.12, 0.06), (2.0, 6.0)),
    'memory': AppProfile('memory', (0.12, 0.40, 0.10), (3.0, 7.0)),
    'balanced': AppProfile('balanced', (0.25, 0.22, 0.18), (2.0, 5.0)),
}


def draw_jitter(rng: np.random.Generator) -> np.ndarray:
    return np.clip(1.0 + 0.15 * rng.standard_normal(JITTER_LENGTH), 0.5, 1.5)


def spawn_tasks(lam: float, t: int, rng: np.random.Generator, first_id: int = 0,
                deadlines: Optional[Dict[str, float]] = None) -> List[TaskSpec]:
    """
    Poisson(lam) new tasks for interval t, each from a uniformly chosen profile
    """
    if lam < 0:
        raise ParameterError(f"arrival rate must be >= 0, got {lam}")
    deadlines = deadlines or {}
    count = int(rng.poisson(lam)) if lam > 0 else 0
    tasks = []
    for offset in range(count):
        profile = PROFILE_TABLE[PROFILES[int(rng.integers(len(PROFILES)))]]
        scale = rng.uniform(0.8, 1.2)
        demand = np.array(profile.demand) * scale
        duration = rng.uniform(*profile.duration)
        tasks.append(TaskSpec(
            id=first_id + offset,
            app_profile=profile.name,
            total_work=float(demand[0] * duration),
            demand=demand,
            arrival_interval=t,
            slo_deadline=deadlines.get(profile.name, 1800.0),
            jitter=draw_jitter(rng),
        ))
    return tasks


class WorkloadGenerator:
    """
    Arrival stream of one episode. Interval t always draws from its own derived
    stream, so every policy sees the same tasks for the same seed.
    """

    def __init__(self, config: SimConfig, deadlines: Optional[Sequence[float]] = None):
        self.config = config
        deadlines = config.slo_deadlines if deadlines is None else deadlines
        self.deadlines = dict(zip(PROFILES, deadlines))
        self.next_id = 0

    def arrivals(self, t: int) -> List[TaskSpec]:
        rng = derive_rng(self.config.seed, 'workload', t)
        tasks = spawn_tasks(self.config.lam, t, rng, self.next_id, self.deadlines)
        self.next_id += len(tasks)
        if tasks:
            logger.debug("interval %d: %d arrivals", t, len(tasks))
        return tasks
