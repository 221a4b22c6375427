"""
Episode runner
Drives the environment for T intervals under a scheduling policy, records a
replayable log and stores it as `meta` + `trace.csv`
"""

import logging
import os
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .baselines import GreedyReferencePolicy
from .cluster import (ClusterState, Completion, CoSimulator, IntervalOutcome, initial_state,
                      step_interval)
from .labeler import format_kinds, parse_kinds
from ..data.telemetry import StateMatrix, build_window, state_matrix
from ..data.workload import WorkloadGenerator
from ..errors import DatasetError, DimensionError, SchedulerError
from ..utils.config import PROFILES, SimConfig
from ..utils.exporter import (decode_floats, decode_ints, encode_floats, encode_ints, read_csv,
                              read_meta, write_csv, write_meta)
from ..utils.seeding import derive_rng

logger = logging.getLogger(__name__)


@dataclass
class EpisodeContext:
    """What a policy may look at besides the current state"""
    config: SimConfig
    cosim: CoSimulator
    rng: np.random.Generator
    matrices: List[StateMatrix] = field(default_factory=list)
    previous_targets: Dict[int, int] = field(default_factory=dict)

    def window(self, t: Optional[int] = None) -> np.ndarray:
        t = len(self.matrices) - 1 if t is None else t
        return build_window(self.matrices, t, self.config.k)

    def next_window(self, next_state: ClusterState) -> np.ndarray:
        """Raw window one interval ahead, given a (co-)simulated next state"""
        history = self.matrices + [state_matrix(next_state, self.config.features)]
        return build_window(history, len(history) - 1, self.config.k)


class Policy(Protocol):
    name: str

    def decide(self, state: ClusterState, context: EpisodeContext) -> np.ndarray:
        ...


@dataclass
class IntervalRecord:
    t: int
    task_ids: Tuple[int, ...]
    placement: np.ndarray
    targets: np.ndarray
    matrix: StateMatrix
    utilization: np.ndarray
    outcome: IntervalOutcome
    decision_time: float = 0.0
    reference_targets: Optional[np.ndarray] = None
    reference_time: float = 0.0
    qos: float = float('nan')
    reference_qos: float = float('nan')
    extras: Dict[str, object] = field(default_factory=dict)


@dataclass
class EpisodeLog:
    config: SimConfig
    policy: str
    deadlines: Tuple[float, ...]
    records: List[IntervalRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def outcomes(self) -> List[IntervalOutcome]:
        return [r.outcome for r in self.records]


EXTRA_COLUMNS = ('score', 'threshold', 'label', 'fault_class', 'host_scores', 'host_thresholds',
                 'ranking', 'prototype')

TRACE_COLUMNS = (
    't', 'task_ids', 'placement', 'targets', 'state', 'utilization',
    'art', 'aec', 'art_seconds', 'energy', 'completions', 'slo_violations', 'migrations',
    'migration_time', 'active_tasks', 'arrived', 'mean_cpu', 'mean_ram',
    'fault_flags', 'fault_kinds', 'responses',
    'decision_time', 'reference_targets', 'reference_time', 'qos', 'reference_qos',
) + EXTRA_COLUMNS


def run_episode(config: SimConfig, scheduler: Policy, reference: Optional[Policy] = None,
                deadlines: Optional[Sequence[float]] = None, observer=None) -> EpisodeLog:
    """
    Execute T intervals. At each boundary new tasks arrive, the policy decides
    and the environment steps. With a `reference` policy its decision on the
    identical state is computed and timed too, and both decisions are scored by
    one co-simulated interval.
    """
    deadlines = tuple(config.slo_deadlines if deadlines is None else deadlines)
    log = EpisodeLog(config=config, policy=getattr(scheduler, 'name', type(scheduler).__name__),
                     deadlines=deadlines)
    if config.T <= 0:
        return log
    workload = WorkloadGenerator(config, deadlines)
    cosim = CoSimulator(config)
    context = EpisodeContext(config, cosim, derive_rng(config.seed, 'scheduler'))
    ref_context = EpisodeContext(config, cosim, derive_rng(config.seed, 'scheduler', 1)) if reference else None
    state = initial_state(config)

    for t in range(config.T):
        arrivals = workload.arrivals(t)
        state.tasks.extend(arrivals)
        matrix = state_matrix(state, config.features)
        context.matrices.append(matrix)
        if ref_context is not None:
            ref_context.matrices.append(matrix)
        placement = state.placement

        started = time.perf_counter()
        schedule = scheduler.decide(state, context)
        decision_time = time.perf_counter() - started
        schedule = np.asarray(schedule, dtype=np.float64)
        if schedule.shape != (state.p, state.m):
            raise SchedulerError(f"policy '{log.policy}' returned a {schedule.shape} decision at "
                                 f"interval {t}, expected ({state.p}, {state.m})")

        reference_targets = None
        reference_time = 0.0
        qos = reference_qos = float('nan')
        if reference is not None:
            started = time.perf_counter()
            ref_schedule = reference.decide(state, ref_context)
            reference_time = time.perf_counter() - started
            reference_targets = ref_schedule.argmax(axis=1) if state.p else np.zeros(0, dtype=np.int64)
            qos = cosim.qos(state, schedule)
            reference_qos = cosim.qos(state, ref_schedule)

        env_rng = derive_rng(config.seed, 'interference', t)
        next_state, outcome = step_interval(state, schedule, env_rng, config)
        outcome.arrived = len(arrivals)
        targets = schedule.argmax(axis=1) if state.p else np.zeros(0, dtype=np.int64)
        log.records.append(IntervalRecord(
            t=t, task_ids=tuple(state.task_ids), placement=placement, targets=targets, matrix=matrix,
            utilization=next_state.utilization.copy(), outcome=outcome, decision_time=decision_time,
            reference_targets=reference_targets, reference_time=reference_time, qos=qos,
            reference_qos=reference_qos,
        ))
        context.previous_targets = {task.id: int(h) for task, h in zip(state.tasks, targets)}
        if observer is not None:
            observer(state, schedule, next_state, outcome, context)
        if hasattr(scheduler, 'observe'):
            scheduler.observe(state, schedule, next_state, outcome, context)
        log.records[-1].extras = dict(getattr(scheduler, 'last_extras', {}) or {})
        if reference is not None and hasattr(reference, 'observe'):
            reference.observe(state, ref_schedule, next_state, outcome, ref_context)
        state = next_state
        logger.debug("interval %d: p=%d completions=%d migrations=%d faults=%d", t, outcome.active_tasks,
                     outcome.completions, outcome.migrations, int(outcome.fault_flags.sum()))

    logger.info("episode done: policy=%s T=%d seed=%d", log.policy, config.T, config.seed)
    return log


def calibrate_slo_deadlines(config: SimConfig, calibration_T: int = 50, quantile: float = 90.0) -> Tuple[float, ...]:
    """
    Per-profile deadline = the given percentile of response times under the
    greedy reference scheduler, run on the calibration stream
    """
    calibration = replace(config, T=calibration_T,
                          seed=int(derive_rng(config.seed, 'calibration').integers(2 ** 31)))
    log = run_episode(calibration, GreedyReferencePolicy())
    responses = {profile: [] for profile in PROFILES}
    for outcome in log.outcomes:
        for c in outcome.completed:
            responses[c.app_profile].append(c.response_time)
    deadlines = []
    for profile, default in zip(PROFILES, config.slo_deadlines):
        values = responses[profile]
        deadlines.append(float(np.percentile(values, quantile)) if values else float(default))
    logger.info("calibrated SLO deadlines: %s", dict(zip(PROFILES, np.round(deadlines, 1))))
    return tuple(deadlines)


def _encode_responses(completed: Sequence[Completion]) -> str:
    return ' '.join(f"{c.task_id}:{c.app_profile}:{float(c.response_time)!r}:{int(c.violated)}" for c in completed)


def _decode_responses(text: str) -> List[Completion]:
    completions = []
    for item in text.split():
        task_id, profile, response, violated = item.split(':')
        completions.append(Completion(int(task_id), profile, float(response), violated == '1'))
    return completions


def _encode_extra(value) -> str:
    if value is None:
        return ''
    if isinstance(value, (list, tuple, np.ndarray)):
        return encode_floats(value)
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _decode_extra(key: str, text: str):
    if key in ('label', 'fault_class'):
        return int(text)
    if key == 'ranking':
        return decode_floats(text).astype(np.int64)
    if key in ('score', 'threshold'):
        return float(text)
    return decode_floats(text)


def save_episode(log: EpisodeLog, directory: str) -> None:
    config = log.config
    os.makedirs(directory, exist_ok=True)
    write_meta({
        'm': config.m, 'n': config.n, 'k': config.k, 'T': config.T, 'seed': config.seed,
        'lam': config.lam, 'features': config.features, 'interval_seconds': config.interval_seconds,
        'policy': log.policy, 'profiles': PROFILES, 'deadlines': log.deadlines,
        'layout': 'host-major/feature-minor',
    }, os.path.join(directory, 'meta'))
    rows = []
    for r in log.records:
        o = r.outcome
        row = {
            't': r.t, 'task_ids': encode_ints(r.task_ids), 'placement': encode_ints(r.placement),
            'targets': encode_ints(r.targets), 'state': encode_floats(r.matrix.values),
            'utilization': encode_floats(r.utilization),
            'art': repr(o.art), 'aec': repr(o.aec), 'art_seconds': repr(o.art_seconds), 'energy': repr(o.energy),
            'completions': o.completions, 'slo_violations': o.slo_violations, 'migrations': o.migrations,
            'migration_time': repr(float(o.migration_time)), 'active_tasks': o.active_tasks,
            'arrived': o.arrived, 'mean_cpu': repr(o.mean_cpu), 'mean_ram': repr(o.mean_ram),
            'fault_flags': ''.join('1' if f else '0' for f in o.fault_flags),
            'fault_kinds': format_kinds(o.fault_kinds), 'responses': _encode_responses(o.completed),
            'decision_time': repr(float(r.decision_time)),
            'reference_targets': '' if r.reference_targets is None else encode_ints(r.reference_targets),
            'reference_time': repr(float(r.reference_time)), 'qos': repr(float(r.qos)),
            'reference_qos': repr(float(r.reference_qos)),
        }
        for key in EXTRA_COLUMNS:
            row[key] = _encode_extra(r.extras.get(key))
        rows.append(row)
    write_csv(rows, os.path.join(directory, 'trace.csv'), columns=TRACE_COLUMNS)
    logger.info("episode log written to %s", directory)


def load_episode(directory: str) -> EpisodeLog:
    meta = read_meta(os.path.join(directory, 'meta'))
    try:
        m, k, T, seed = int(meta['m']), int(meta['k']), int(meta['T']), int(meta['seed'])
        deadlines = tuple(float(v) for v in meta['deadlines'].split(','))
        config = SimConfig(m=m, k=k, T=T, seed=seed, lam=float(meta['lam']), features=meta['features'],
                           interval_seconds=float(meta['interval_seconds']), slo_deadlines=deadlines)
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"episode meta in '{directory}' is corrupted: {exc}")
    frame = read_csv(os.path.join(directory, 'trace.csv'))
    missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
    if missing:
        raise DatasetError(f"trace.csv in '{directory}' lacks columns {missing}")
    log = EpisodeLog(config=config, policy=meta.get('policy', ''), deadlines=deadlines)
    n = config.n
    for row in frame.to_dict('records'):
        task_ids = tuple(int(v) for v in decode_ints(row['task_ids']))
        matrix = StateMatrix(decode_floats(row['state'], (m + len(task_ids), n)), task_ids, m)
        flags = np.array([c == '1' for c in row['fault_flags']], dtype=bool)
        if flags.size != m:
            raise DatasetError(f"trace.csv row t={row['t']}: {flags.size} fault flags for {m} hosts")
        completed = _decode_responses(row['responses'])
        outcome = IntervalOutcome(
            t=int(row['t']), art=float(row['art']), aec=float(row['aec']),
            art_seconds=float(row['art_seconds']), energy=float(row['energy']),
            completions=int(row['completions']), slo_violations=int(row['slo_violations']),
            migrations=int(row['migrations']), migration_time=float(row['migration_time']),
            fault_flags=flags, fault_kinds=parse_kinds(row['fault_kinds'], m), completed=completed,
            active_tasks=int(row['active_tasks']), arrived=int(row['arrived']),
            mean_cpu=float(row['mean_cpu']), mean_ram=float(row['mean_ram']),
        )
        extras = {key: _decode_extra(key, row[key]) for key in EXTRA_COLUMNS if row[key] != ''}
        log.records.append(IntervalRecord(
            t=int(row['t']), task_ids=task_ids, placement=decode_ints(row['placement']),
            targets=decode_ints(row['targets']), matrix=matrix,
            utilization=decode_floats(row['utilization'], (m, 3)), outcome=outcome,
            decision_time=float(row['decision_time']),
            reference_targets=decode_ints(row['reference_targets']) if row['reference_targets'] != '' else None,
            reference_time=float(row['reference_time']), qos=float(row['qos']),
            reference_qos=float(row['reference_qos']), extras=extras,
        ))
    if log.records and log.records[-1].matrix.n != n:
        raise DimensionError(f"trace.csv holds {log.records[-1].matrix.n} features, meta says {n}")
    return log


def window_at(log: EpisodeLog, t: int, k: Optional[int] = None) -> np.ndarray:
    """Raw window W_t rebuilt from a log"""
    return build_window([r.matrix for r in log.records], t, k or log.config.k)


def next_window_at(log: EpisodeLog, t: int, k: Optional[int] = None) -> np.ndarray:
    """
    Raw W_(t+1) as seen right after interval t, before the arrivals of t+1:
    host rows from the utilization of I_t, task rows of the survivors
    """
    k = k or log.config.k
    history = [r.matrix for r in log.records[:t + 1]]
    record = log.records[t]
    if t + 1 < len(log.records):
        after = log.records[t + 1].matrix
        survivors = [i for i, task_id in enumerate(after.task_ids) if task_id in set(record.task_ids)]
        values = np.vstack([after.values[:after.m], after.values[[after.m + i for i in survivors]]]) \
            if survivors else after.values[:after.m]
        nxt = StateMatrix(values, tuple(after.task_ids[i] for i in survivors), after.m)
    else:
        nxt = StateMatrix(np.vstack([_host_rows(record.utilization, log.config.features)]), (), record.matrix.m)
    history.append(nxt)
    return build_window(history, len(history) - 1, k)


def _host_rows(utilization: np.ndarray, features: str) -> np.ndarray:
    if features == 'extended':
        pressure = np.maximum(0.0, utilization[:, 1:3] - 1.0)
        return np.hstack([utilization, pressure])
    return utilization
