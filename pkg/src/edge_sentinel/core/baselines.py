"""
Baseline policies
Random placement, a reactive utilisation-threshold heuristic and the greedy
co-simulator reference, plus the capacity helpers the feasibility projection
shares with them
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from .cluster import ClusterState, CoSimulator, one_hot
from ..errors import ParameterError
from ..utils.config import SimConfig

logger = logging.getLogger(__name__)


def load_fraction(load: np.ndarray, capacities: np.ndarray) -> np.ndarray:
    """Largest per-resource load fraction of each host"""
    return (load / capacities).max(axis=1)


def fits(load: np.ndarray, demand: np.ndarray, capacities: np.ndarray) -> np.ndarray:
    """Hosts that can take `demand` on top of `load` in every resource"""
    return np.all(load + demand <= capacities + 1e-12, axis=1)


def least_utilized(load: np.ndarray, capacities: np.ndarray, demand: Optional[np.ndarray] = None,
                   exclude: Sequence[int] = ()) -> int:
    """
    Least-utilised host that fits `demand` (any host when none fits);
    lowest index on ties
    """
    fraction = load_fraction(load, capacities)
    candidates = np.ones(len(fraction), dtype=bool)
    candidates[list(exclude)] = False
    if demand is not None:
        feasible = candidates & fits(load, demand, capacities)
        if feasible.any():
            candidates = feasible
    if not candidates.any():
        candidates = np.ones(len(fraction), dtype=bool)
    return int(np.flatnonzero(candidates)[np.argmin(fraction[candidates])])


def resident_load(state: ClusterState) -> np.ndarray:
    """Interference plus the demand of every already-placed task on its host"""
    placement = state.placement
    return state.projected_load(placement, placement >= 0)


class RandomPolicy:
    """Uniformly random feasible host for each new task; nothing migrates"""
    name = 'random'

    def decide(self, state: ClusterState, context) -> np.ndarray:
        return self.schedule(state, context.rng)

    def schedule(self, state: ClusterState, rng: np.random.Generator) -> np.ndarray:
        capacities = state.capacities
        load = resident_load(state)
        demands = state.task_demands()
        targets = state.placement.copy()
        for i in np.flatnonzero(targets < 0):
            feasible = np.flatnonzero(fits(load, demands[i], capacities))
            pool = feasible if feasible.size else np.arange(state.m)
            targets[i] = int(pool[rng.integers(pool.size)])
            load[targets[i]] += demands[i]
        return one_hot(targets, state.m)


class ReactiveThresholdPolicy:
    """
    New tasks go to the least-utilised feasible host. A host whose observed
    utilisation exceeds the static cap in any resource hands its largest task
    to the least-utilised feasible other host.
    """
    name = 'reactive_threshold'

    def __init__(self, static_cap: float = 0.9):
        self.static_cap = static_cap

    def decide(self, state: ClusterState, context) -> np.ndarray:
        return self.schedule(state)

    def schedule(self, state: ClusterState) -> np.ndarray:
        capacities = state.capacities
        load = resident_load(state)
        demands = state.task_demands()
        targets = state.placement.copy()
        for i in np.flatnonzero(targets < 0):
            targets[i] = least_utilized(load, capacities, demands[i])
            load[targets[i]] += demands[i]
        overloaded = np.flatnonzero((state.utilization > self.static_cap).any(axis=1))
        for host in overloaded:
            residents = [i for i in range(state.p) if state.tasks[i].host == host]
            if not residents:
                continue
            largest = max(residents, key=lambda i: (float((demands[i] / capacities[host]).sum()), -i))
            destination = least_utilized(load, capacities, demands[largest], exclude=[host])
            room = fits(load[[destination]], demands[largest], capacities[[destination]])[0]
            if destination == host or not room:
                continue
            load[host] -= demands[largest]
            load[destination] += demands[largest]
            targets[largest] = destination
            logger.debug("interval %d: host %d over cap, task %d -> host %d", state.t, host,
                         state.tasks[largest].id, destination)
        return one_hot(targets, state.m)


class GreedyReferencePolicy:
    """
    Places new tasks one at a time in id order on the host whose co-simulated
    next interval scores the best QoS. Existing tasks stay where they are.
    """
    name = 'greedy_ref'

    def __init__(self, cosim: Optional[CoSimulator] = None):
        self.cosim = cosim

    def decide(self, state: ClusterState, context) -> np.ndarray:
        cosim = self.cosim or getattr(context, 'cosim', None) or CoSimulator(context.config)
        return self.schedule(state, cosim)

    def schedule(self, state: ClusterState, cosim: CoSimulator) -> np.ndarray:
        targets = state.placement.copy()
        placed: List[int] = [i for i in range(state.p) if targets[i] >= 0]
        for i in sorted(np.flatnonzero(targets < 0), key=lambda i: state.tasks[i].id):
            members = placed + [i]
            trial = state.with_tasks([state.tasks[j] for j in members])
            best_host, best_qos = 0, -np.inf
            for host in range(state.m):
                targets[i] = host
                qos = cosim.qos(trial, one_hot(targets[members], state.m))
                if qos > best_qos:
                    best_host, best_qos = host, qos
            targets[i] = best_host
            placed.append(i)
        return one_hot(targets, state.m)


BASELINES = {
    'random': RandomPolicy,
    'reactive_threshold': ReactiveThresholdPolicy,
    'greedy_ref': GreedyReferencePolicy,
}


def make_baseline(policy: str, config: Optional[SimConfig] = None):
    if policy not in BASELINES:
        raise ParameterError(f"unknown baseline policy '{policy}', expected one of {sorted(BASELINES)}")
    if policy == 'reactive_threshold' and config is not None:
        return ReactiveThresholdPolicy(config.static_cap)
    return BASELINES[policy]()


def baseline_schedule(policy: str, state: ClusterState, rng: np.random.Generator,
                      config: SimConfig) -> np.ndarray:
    if policy == 'random':
        return RandomPolicy().schedule(state, rng)
    if policy == 'reactive_threshold':
        return ReactiveThresholdPolicy(config.static_cap).schedule(state)
    if policy == 'greedy_ref':
        return GreedyReferencePolicy().schedule(state, CoSimulator(config))
    raise ParameterError(f"unknown baseline policy '{policy}', expected one of {sorted(BASELINES)}")
