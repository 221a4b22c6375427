"""
Experiment harness
Runs closed-loop episodes per seed, turns episode logs into metric bundles,
replays logged episodes through a trained detector and sweeps the arrival rate.
"""

import copy
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import spearmanr

from .baselines import GreedyReferencePolicy, make_baseline
from .cluster import one_hot
from .detector import Assessment, fault_score, row_hosts
from .episode import EpisodeLog, calibrate_slo_deadlines, next_window_at, run_episode, save_episode, window_at
from .prototypes import consistency
from .schedule_optimizer import SurrogatePolicy
from .trainer import Artifacts, load_artifacts
from ..data.telemetry import align_rows
from ..utils.config import ExperimentConfig
from ..utils.exporter import write_csv, write_json
from ..utils.metrics import (detection_metrics, diagnosis_metrics, improvement_ratio, overhead_ratio,
                             qos_suite, summarize_runs)

logger = logging.getLogger(__name__)

METRIC_COLUMNS = (
    't', 'qos', 'reference_qos', 'art', 'aec', 'art_seconds', 'energy', 'completions', 'slo_violations',
    'migrations', 'migration_time', 'active_tasks', 'arrived', 'mean_cpu', 'mean_ram', 'faulty_hosts',
    'score', 'threshold', 'label', 'fault_class',
)
TRAJECTORY_COLUMNS = ('t', 'iteration', 'L_O', 'D_nap', 'fault_class', 'lr', 'prototype')
ATTENTION_COLUMNS = ('t', 'source', 'entity', 'query', 'key', 'weight')
PROTOTYPE_COLUMNS = ('t', 'label', 'fault_class', 'prototype')
SWEEP_COLUMNS = ('lam', 'seed', 'metric', 'value')


def interval_kinds(record) -> frozenset:
    return frozenset(kind for kinds in record.outcome.fault_kinds for kind in kinds)


def faulty_hosts(record) -> List[int]:
    return [int(h) for h in np.flatnonzero(record.outcome.fault_flags)]


def metric_rows(log: EpisodeLog) -> List[Dict[str, object]]:
    """Per-interval metrics; wall-clock timings are left out so reruns match exactly"""
    rows = []
    for r in log.records:
        o = r.outcome
        rows.append({
            't': r.t, 'qos': r.qos, 'reference_qos': r.reference_qos, 'art': o.art, 'aec': o.aec,
            'art_seconds': o.art_seconds, 'energy': o.energy, 'completions': o.completions,
            'slo_violations': o.slo_violations, 'migrations': o.migrations, 'migration_time': o.migration_time,
            'active_tasks': o.active_tasks, 'arrived': o.arrived, 'mean_cpu': o.mean_cpu, 'mean_ram': o.mean_ram,
            'faulty_hosts': len(faulty_hosts(r)),
            'score': r.extras.get('score', ''), 'threshold': r.extras.get('threshold', ''),
            'label': r.extras.get('label', ''), 'fault_class': r.extras.get('fault_class', ''),
        })
    return rows


def detection_bundle(labels: Sequence[bool], rankings: Sequence[Sequence[int]], classes: Sequence[int],
                     records: Sequence) -> Dict[str, float]:
    truth = [bool(r.outcome.fault_flags.any()) for r in records]
    report = detection_metrics(labels, truth)
    hit_rate, ndcg = diagnosis_metrics(rankings, [faulty_hosts(r) for r in records])
    bundle = {key: value for key, value in report.to_dict().items()}
    bundle.update({
        'hit_rate': hit_rate, 'ndcg': ndcg,
        'class_consistency': consistency(classes, [interval_kinds(r) for r in records], labels),
    })
    return bundle


def episode_metrics(log: EpisodeLog) -> Dict[str, float]:
    """Metric bundle of one episode, computed from the log alone"""
    bundle = qos_suite(log.outcomes, log.config.interval_seconds)
    compared = [r for r in log.records if r.reference_targets is not None]
    if compared:
        bundle['improvement_ratio'] = improvement_ratio([r.qos for r in compared],
                                                        [r.reference_qos for r in compared])
        bundle['overhead_ratio'] = overhead_ratio([r.decision_time for r in compared],
                                                  [r.reference_time for r in compared])
    labelled = [r for r in log.records if 'label' in r.extras]
    if labelled:
        bundle.update(detection_bundle(
            [bool(r.extras['label']) for r in labelled],
            [[int(h) for h in r.extras.get('ranking', [])] for r in labelled],
            [int(r.extras.get('fault_class', 0)) for r in labelled],
            labelled,
        ))
    bundle['fault_intervals'] = int(sum(r.outcome.fault_flags.any() for r in log.records))
    return bundle


@dataclass
class EvaluationReport:
    metrics: Dict[str, float]
    assessments: List[Assessment] = field(default_factory=list)


def evaluate(artifacts: Artifacts, log: EpisodeLog) -> EvaluationReport:
    """
    Replay a logged episode through the trained surrogate and detector: every
    interval is scored against the logged next window, labelled, classified
    and its hosts ranked
    """
    model, scaler, detector = artifacts.model.eval(), artifacts.scaler, copy.deepcopy(artifacts.detector)
    m = log.config.m
    assessments = []
    for t, record in enumerate(log.records):
        window = scaler.normalize(window_at(log, t))
        target = scaler.normalize(next_window_at(log, t))
        schedule = one_hot(record.targets, m)
        output = model(window, schedule, record.placement)
        next_ids = log.records[t + 1].matrix.task_ids if t + 1 < len(log.records) else ()
        next_ids = tuple(i for i in next_ids if i in set(record.task_ids))
        pred_idx, next_idx = align_rows(record.task_ids, next_ids, m)
        hosts = row_hosts(m, record.placement, record.targets)[pred_idx]
        score = fault_score(target[next_idx], output.window.data[pred_idx], hosts, m)
        assessments.append(detector.assess(score, output.prototype.data.copy()))
    metrics = detection_bundle([a.label for a in assessments], [a.diagnosis.ranking for a in assessments],
                               [a.fault_class for a in assessments], log.records)
    logger.info("evaluated %d intervals: F1=%.3f HR=%.3f NDCG=%.3f", len(assessments), metrics['f1'],
                metrics['hit_rate'], metrics['ndcg'])
    return EvaluationReport(metrics, assessments)


def build_policy(config: ExperimentConfig, artifacts: Optional[Artifacts] = None):
    if config.policy != 'surrogate':
        return make_baseline(config.policy, config.sim_config())
    if artifacts is None:
        artifacts = load_artifacts(config.checkpoint)
    else:
        artifacts = copy.deepcopy(artifacts)
    return SurrogatePolicy(artifacts, config.opt_config())


@dataclass
class ExperimentResult:
    bundles: Dict[int, Dict[str, float]]
    summary: Dict[str, Dict[str, float]]
    logs: Dict[int, EpisodeLog] = field(default_factory=dict)


def baseline_episode(config: ExperimentConfig, seed: Optional[int], policy_name: str) -> EpisodeLog:
    """One episode of a baseline policy under the calibrated SLO deadlines of its seed"""
    sim = config.sim_config(seed)
    return run_episode(sim, make_baseline(policy_name, sim), deadlines=calibrate_slo_deadlines(sim))


def run_seed(config: ExperimentConfig, seed: int, artifacts: Optional[Artifacts] = None,
             output: Optional[str] = None, lam: Optional[float] = None) -> EpisodeLog:
    sim = config.sim_config(seed, lam)
    deadlines = calibrate_slo_deadlines(sim)
    policy = build_policy(config, artifacts)
    log = run_episode(sim, policy, reference=GreedyReferencePolicy(), deadlines=deadlines)
    if output:
        directory = os.path.join(output, f'seed_{seed}')
        save_episode(log, os.path.join(directory, 'episode'))
        write_csv(metric_rows(log), os.path.join(directory, 'metrics.csv'), columns=METRIC_COLUMNS)
        if isinstance(policy, SurrogatePolicy):
            write_csv(policy.trajectory_rows, os.path.join(directory, 'trajectory.csv'), columns=TRAJECTORY_COLUMNS)
            write_csv(policy.attention, os.path.join(directory, 'attention.csv'), columns=ATTENTION_COLUMNS)
            write_csv(policy.prototype_rows, os.path.join(directory, 'prototypes.csv'), columns=PROTOTYPE_COLUMNS)
    return log


def run_experiment(config: ExperimentConfig, artifacts: Optional[Artifacts] = None,
                   output: Optional[str] = None, lam: Optional[float] = None) -> ExperimentResult:
    """One episode per seed, each compared against the greedy reference on identical states"""
    config.validate()
    bundles, logs = {}, {}
    for seed in config.seeds:
        log = run_seed(config, seed, artifacts, output, lam)
        bundles[seed] = episode_metrics(log)
        logs[seed] = log
        logger.info("seed %d: improvement %.3f, SLO fraction %.3f", seed,
                    bundles[seed].get('improvement_ratio', float('nan')), bundles[seed]['slo_fraction'])
    summary = summarize_runs(list(bundles.values()))
    if output:
        write_json({'policy': config.policy, 'lam': config.lam if lam is None else lam,
                    'seeds': {str(s): b for s, b in bundles.items()}, 'summary': summary},
                   os.path.join(output, 'summary.json'))
    return ExperimentResult(bundles, summary, logs)


def _sweep_point(args):
    config, lam, artifacts, output = args
    directory = os.path.join(output, f'lam_{lam:g}') if output else None
    result = run_experiment(config, artifacts, directory, lam)
    return lam, result.bundles


def sweep_lambda(config: ExperimentConfig, lams: Sequence[float], artifacts: Optional[Artifacts] = None,
                 output: Optional[str] = None) -> Dict[str, object]:
    """
    run_experiment per arrival rate with shared seeds; rows are collected in
    the order of `lams` whatever order the workers finish in
    """
    jobs = [(config, float(lam), artifacts, output) for lam in lams]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = dict(pool.map(_sweep_point, jobs))
    else:
        results = dict(_sweep_point(job) for job in jobs)

    rows = []
    for lam in (float(v) for v in lams):
        for seed, bundle in results[lam].items():
            for metric, value in bundle.items():
                if isinstance(value, (int, float, np.number)) and not isinstance(value, bool):
                    rows.append({'lam': lam, 'seed': seed, 'metric': metric, 'value': float(value)})
    means = {lam: summarize_runs(list(results[lam].values())) for lam in results}
    trend = {}
    for metric in ('energy_per_task', 'f1', 'slo_fraction'):
        values = [means[float(lam)].get(metric, {}).get('mean', float('nan')) for lam in lams]
        if len(lams) > 1 and np.all(np.isfinite(values)):
            rho = spearmanr(list(lams), values)[0]
            trend[metric] = float(rho) if np.isfinite(rho) else float('nan')
    report = {'lams': [float(v) for v in lams], 'means': {f'{lam:g}': means[lam] for lam in means},
              'spearman': trend}
    if output:
        write_csv(rows, os.path.join(output, 'sweep.csv'), columns=SWEEP_COLUMNS)
        write_json(report, os.path.join(output, 'sweep_summary.json'))
    report['rows'] = rows
    return report
