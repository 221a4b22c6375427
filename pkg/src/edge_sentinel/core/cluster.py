"""
Cluster Simulator
Discrete-interval model of an edge cluster: hosts, resident tasks, contention
slowdown, migrations, background interference, power and QoS accounting
"""

import logging
from dataclasses import dataclass, field, replace
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .labeler import RESOURCES, label_ground_truth
from .qos import compute_qos
from ..errors import DimensionError, ParameterError
from ..utils.config import SimConfig
from ..utils.seeding import derive_rng

logger = logging.getLogger(__name__)

JITTER_LENGTH = 64

# (cpu, ram, disk capacity, idle watts, peak watts), cycled across the fleet
HOST_TYPES = (
    (1.0, 1.0, 1.0, 60.0, 120.0),
    (1.5, 1.5, 1.2, 80.0, 180.0),
    (2.0, 2.0, 1.5, 100.0, 250.0),
)


@dataclass(frozen=True)
class HostSpec:
    id: int
    cpu_capacity: float
    ram_capacity: float
    disk_capacity: float
    power_idle: float
    power_peak: float

    def __post_init__(self):
        if min(self.cpu_capacity, self.ram_capacity, self.disk_capacity) <= 0:
            raise ParameterError(f"host {self.id}: capacities must be > 0")
        if not self.power_peak >= self.power_idle > 0:
            raise ParameterError(f"host {self.id}: need power_peak >= power_idle > 0, "
                                 f"got {self.power_peak}, {self.power_idle}")

    @property
    def capacity(self) -> np.ndarray:
        return np.array([self.cpu_capacity, self.ram_capacity, self.disk_capacity])


@dataclass
class TaskSpec:
    """
    A bag-of-tasks job. `demand` is the per-interval (cpu, ram, disk) load in
    capacity units; the a-th interval of the task's life scales it by
    jitter[a mod 64]. `host` is -1 until first placement.
    """
    id: int
    app_profile: str
    total_work: float
    demand: np.ndarray
    arrival_interval: int
    slo_deadline: float
    jitter: np.ndarray = field(default_factory=lambda: np.ones(JITTER_LENGTH))
    remaining_work: float = -1.0
    host: int = -1
    age: int = 0

    def __post_init__(self):
        if self.total_work <= 0:
            raise ParameterError(f"task {self.id}: total_work must be > 0, got {self.total_work}")
        if np.any(np.asarray(self.demand) < 0):
            raise ParameterError(f"task {self.id}: demand components must be >= 0")
        if self.slo_deadline <= 0:
            raise ParameterError(f"task {self.id}: slo_deadline must be > 0")
        if self.remaining_work < 0:
            self.remaining_work = self.total_work

    def current_demand(self) -> np.ndarray:
        return self.demand * self.jitter[self.age % len(self.jitter)]


@dataclass
class Completion:
    task_id: int
    app_profile: str
    response_time: float
    violated: bool


@dataclass
class ClusterState:
    """
    Snapshot at an interval boundary. `utilization` is the per-host load
    fraction of the interval that just ended; `history` holds the up to k
    utilization matrices before it.
    """
    t: int
    hosts: List[HostSpec]
    tasks: List[TaskSpec]
    utilization: np.ndarray
    history: Tuple[np.ndarray, ...] = ()
    interference: Optional[np.ndarray] = None
    interference_left: Optional[np.ndarray] = None
    completed: List[Completion] = field(default_factory=list)
    art_cap: float = 2400.0

    def __post_init__(self):
        m = len(self.hosts)
        if self.interference is None:
            self.interference = np.zeros((m, len(RESOURCES)))
        if self.interference_left is None:
            self.interference_left = np.zeros(m, dtype=np.int64)

    @property
    def m(self) -> int:
        return len(self.hosts)

    @property
    def p(self) -> int:
        return len(self.tasks)

    @property
    def capacities(self) -> np.ndarray:
        return np.stack([h.capacity for h in self.hosts])

    @property
    def placement(self) -> np.ndarray:
        return np.array([task.host for task in self.tasks], dtype=np.int64)

    @property
    def task_ids(self) -> List[int]:
        return [task.id for task in self.tasks]

    def task_demands(self) -> np.ndarray:
        if not self.tasks:
            return np.zeros((0, len(RESOURCES)))
        return np.stack([task.current_demand() for task in self.tasks])

    def interference_load(self) -> np.ndarray:
        return self.interference * self.capacities

    def projected_load(self, targets: Sequence[int], include: Optional[Sequence[bool]] = None) -> np.ndarray:
        """Interference plus the demand of every included task on its target host"""
        load = self.interference_load().copy()
        demands = self.task_demands()
        for i, host in enumerate(targets):
            if host >= 0 and (include is None or include[i]):
                load[host] += demands[i]
        return load

    def copy(self) -> 'ClusterState':
        return replace(
            self,
            hosts=list(self.hosts),
            tasks=[replace(task) for task in self.tasks],
            utilization=self.utilization.copy(),
            history=tuple(self.history),
            interference=self.interference.copy(),
            interference_left=self.interference_left.copy(),
            completed=list(self.completed),
        )

    def with_tasks(self, tasks: Sequence[TaskSpec]) -> 'ClusterState':
        state = self.copy()
        state.tasks = [replace(task) for task in tasks]
        return state

    def check_invariants(self) -> None:
        for task in self.tasks:
            if not 0 <= task.host < self.m:
                raise ParameterError(f"task {task.id} is not placed on a host (host={task.host})")
            if not 0 < task.remaining_work <= task.total_work:
                raise ParameterError(f"task {task.id}: remaining work {task.remaining_work} "
                                     f"outside (0, {task.total_work}]")
        if not np.all(np.isfinite(self.utilization)) or np.any(self.utilization < 0):
            raise ParameterError("host utilization must be finite and non-negative")


@dataclass
class IntervalOutcome:
    t: int
    art: float
    aec: float
    art_seconds: float
    energy: float
    completions: int
    slo_violations: int
    migrations: int
    migration_time: float
    fault_flags: np.ndarray
    fault_kinds: List[FrozenSet[str]]
    completed: List[Completion] = field(default_factory=list)
    active_tasks: int = 0
    arrived: int = 0
    mean_cpu: float = 0.0
    mean_ram: float = 0.0


def build_fleet(m: int) -> List[HostSpec]:
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    return [HostSpec(i, *HOST_TYPES[i % len(HOST_TYPES)]) for i in range(m)]


def initial_state(config: SimConfig) -> ClusterState:
    hosts = build_fleet(config.m)
    return ClusterState(t=0, hosts=hosts, tasks=[], utilization=np.zeros((config.m, len(RESOURCES))),
                        art_cap=config.art_max_seconds)


def schedule_targets(state: ClusterState, schedule: np.ndarray) -> np.ndarray:
    """Validate a one-hot (p, m) decision and return the target host per task"""
    schedule = np.asarray(schedule, dtype=np.float64)
    if schedule.ndim != 2 or schedule.shape != (state.p, state.m):
        raise DimensionError(f"schedule shape {schedule.shape} does not match "
                             f"(active tasks, hosts) = ({state.p}, {state.m})")
    if state.p and not (np.all((schedule == 0) | (schedule == 1)) and np.all(schedule.sum(axis=1) == 1)):
        raise ParameterError("schedule rows must be one-hot")
    return schedule.argmax(axis=1) if state.p else np.zeros(0, dtype=np.int64)


def one_hot(targets: Sequence[int], m: int) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.int64)
    schedule = np.zeros((len(targets), m))
    schedule[np.arange(len(targets)), targets] = 1.0
    return schedule


def _advance_interference(state: ClusterState, config: SimConfig, rng: np.random.Generator):
    """Continue running interference episodes and start new ones"""
    level = state.interference.copy()
    left = state.interference_left.copy()
    active = left > 0
    left[active] -= 1
    level[left == 0] = 0.0
    # fixed number of draws per host keeps streams aligned across policies
    starts = rng.random(state.m)
    resources = rng.integers(0, len(RESOURCES), size=state.m)
    magnitudes = rng.uniform(0.3, 0.6, size=state.m)
    durations = rng.integers(2, 6, size=state.m)
    for h in range(state.m):
        if left[h] == 0 and starts[h] < config.interference_prob:
            level[h] = 0.0
            level[h, resources[h]] = magnitudes[h]
            left[h] = durations[h]
    return level, left


def step_interval(state: ClusterState, schedule: np.ndarray, rng: np.random.Generator,
                  config: SimConfig) -> Tuple[ClusterState, IntervalOutcome]:
    """
    Execute one scheduling interval under a one-hot decision. The input state
    is left untouched.
    """
    targets = schedule_targets(state, schedule)
    interference, interference_left = _advance_interference(state, config, rng)
    capacities = state.capacities
    demands = state.task_demands()
    sources = state.placement
    migrated = (sources >= 0) & (sources != targets)

    load = interference * capacities
    for i in range(state.p):
        load[targets[i]] += demands[i]
        if migrated[i]:
            load[sources[i]] += demands[i]
    utilization = load / capacities
    with np.errstate(divide='ignore'):
        headroom = np.where(load > 0, np.minimum(1.0, capacities / np.maximum(load, 1e-300)), 1.0)
    slowdown = headroom.min(axis=1)

    dt = config.interval_seconds
    survivors: List[TaskSpec] = []
    completed: List[Completion] = []
    for i, task in enumerate(state.tasks):
        progress = demands[i][0] * slowdown[targets[i]]
        if migrated[i]:
            progress *= 1.0 - config.migration_downtime
        if progress >= task.remaining_work and progress > 0:
            fraction = task.remaining_work / progress
            response = (state.t + fraction) * dt - task.arrival_interval * dt
            completed.append(Completion(task.id, task.app_profile, response, response > task.slo_deadline))
            continue
        survivors.append(replace(task, remaining_work=task.remaining_work - progress,
                                 host=int(targets[i]), age=task.age + 1))

    cpu_util = np.minimum(utilization[:, 0], 1.0)
    idle = np.array([h.power_idle for h in state.hosts])
    peak = np.array([h.power_peak for h in state.hosts])
    power = idle + (peak - idle) * cpu_util
    aec = float(power.sum() / peak.sum())

    art_seconds = float(np.mean([c.response_time for c in completed])) if completed else 0.0
    art_cap = state.art_cap
    if state.t < config.warmup and art_seconds > art_cap:
        art_cap = art_seconds
    art = float(np.clip(art_seconds / art_cap, 0.0, 1.0))

    history = (tuple(state.history) + (state.utilization,))[-config.k:] if state.t > 0 else ()
    next_state = ClusterState(
        t=state.t + 1, hosts=state.hosts, tasks=survivors, utilization=utilization,
        history=history, interference=interference, interference_left=interference_left,
        completed=completed, art_cap=art_cap,
    )
    flags, kinds = label_ground_truth(next_state, kappa=config.threshold_kappa, static_cap=config.static_cap)
    n_migrations = int(migrated.sum())
    outcome = IntervalOutcome(
        t=state.t, art=art, aec=aec, art_seconds=art_seconds, energy=float(power.sum() * dt),
        completions=len(completed), slo_violations=sum(c.violated for c in completed),
        migrations=n_migrations, migration_time=n_migrations * config.migration_downtime * dt,
        fault_flags=flags, fault_kinds=kinds, completed=completed, active_tasks=state.p,
        mean_cpu=float(utilization[:, 0].mean()), mean_ram=float(utilization[:, 1].mean()),
    )
    return next_state, outcome


class CoSimulator:
    """
    Single-interval oracle. Every query for interval t draws from the same
    derived stream, so candidate decisions face identical conditions.
    """

    def __init__(self, config: SimConfig):
        self.config = config
        self.queries = 0

    def simulate(self, state: ClusterState, schedule: np.ndarray) -> Tuple[ClusterState, IntervalOutcome]:
        self.queries += 1
        rng = derive_rng(self.config.seed, 'cosim', state.t)
        return step_interval(state, schedule, rng, self.config)

    def qos(self, state: ClusterState, schedule: np.ndarray) -> float:
        _, outcome = self.simulate(state, schedule)
        return compute_qos(outcome, self.config.alpha, self.config.beta)
