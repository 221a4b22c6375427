"""
Metrics Module
Detection scores, diagnosis ranking quality, improvement and overhead ratios,
and the QoS suite computed from interval outcomes
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix

from .config import PROFILES
from ..core.qos import jain_fairness
from ..errors import DimensionError

logger = logging.getLogger(__name__)


@dataclass
class DetectionReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    # set when precision or recall had an empty denominator
    undefined: bool = False

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def _ratio(num: float, den: float) -> float:
    return float(num / den) if den > 0 else 0.0


def detection_metrics(predicted: Sequence[bool], truth: Sequence[bool]) -> DetectionReport:
    """Binary scores with fault as the positive class"""
    predicted = np.asarray(predicted, dtype=bool).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    if predicted.shape != truth.shape:
        raise DimensionError(f"{predicted.size} predicted labels for {truth.size} ground-truth labels")
    if predicted.size == 0:
        return DetectionReport(0.0, 0.0, 0.0, 0.0, 0, 0, 0, 0, undefined=True)
    tn, fp, fn, tp = (int(v) for v in confusion_matrix(truth, predicted, labels=[False, True]).ravel())
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    return DetectionReport(
        accuracy=_ratio(tp + tn, predicted.size), precision=precision, recall=recall, f1=f1,
        tp=tp, fp=fp, tn=tn, fn=fn, undefined=(tp + fp == 0) or (tp + fn == 0),
    )


def diagnosis_metrics(rankings: Sequence[Sequence[int]], truth: Sequence[Iterable[int]]):
    """
    (HitRate@100%, NDCG@100%): for g true hosts look at the top g of the
    ranking; averaged over intervals with at least one true host
    """
    if len(rankings) != len(truth):
        raise DimensionError(f"{len(rankings)} rankings for {len(truth)} ground-truth sets")
    hits, gains = [], []
    for ranking, true_hosts in zip(rankings, truth):
        true_hosts = set(int(h) for h in true_hosts)
        g = len(true_hosts)
        if g == 0:
            continue
        top = [int(h) for h in list(ranking)[:g]]
        relevance = np.array([h in true_hosts for h in top], dtype=np.float64)
        discounts = 1.0 / np.log2(np.arange(2, g + 2))
        hits.append(relevance.sum() / g)
        gains.append(float(np.sum(relevance * discounts[:len(top)]) / discounts.sum()))
    if not hits:
        return 0.0, 0.0
    return float(np.mean(hits)), float(np.mean(gains))


def improvement_ratio(qos: Sequence[float], reference_qos: Sequence[float]) -> float:
    """Share of intervals where the policy's co-simulated QoS strictly beats the reference"""
    qos = np.asarray(qos, dtype=np.float64)
    reference_qos = np.asarray(reference_qos, dtype=np.float64)
    if qos.shape != reference_qos.shape:
        raise DimensionError(f"{qos.size} QoS values for {reference_qos.size} reference values")
    if qos.size == 0:
        return 0.0
    return float(np.mean(qos > reference_qos))


def overhead_ratio(decision_times: Sequence[float], reference_times: Sequence[float]) -> float:
    total_ref = float(np.sum(reference_times))
    return float(np.sum(decision_times)) / total_ref if total_ref > 0 else float('nan')


def qos_suite(outcomes: Sequence, interval_seconds: float) -> Dict[str, float]:
    """
    Episode-level QoS: energy per completed task, response times and SLO
    violation fractions overall and per application, fairness of response
    times, migration counts and times, utilisation and task counts
    """
    completed = [c for o in outcomes for c in o.completed]
    energy = float(sum(o.energy for o in outcomes))
    suite: Dict[str, float] = {
        'intervals': len(outcomes),
        'completed_tasks': len(completed),
        'energy': energy,
        'energy_per_task': energy / len(completed) if completed else float('nan'),
        'art_seconds': float(np.mean([c.response_time for c in completed])) if completed else float('nan'),
        'slo_fraction': float(np.mean([c.violated for c in completed])) if completed else 0.0,
        'fairness': jain_fairness([c.response_time for c in completed])
        if completed and all(c.response_time > 0 for c in completed) else float('nan'),
        'migrations': int(sum(o.migrations for o in outcomes)),
        'migration_time': float(sum(o.migration_time for o in outcomes)),
        'mean_cpu': float(np.mean([o.mean_cpu for o in outcomes])) if outcomes else 0.0,
        'mean_ram': float(np.mean([o.mean_ram for o in outcomes])) if outcomes else 0.0,
        'mean_active_tasks': float(np.mean([o.active_tasks for o in outcomes])) if outcomes else 0.0,
    }
    suite['avg_migration_time'] = suite['migration_time'] / suite['migrations'] if suite['migrations'] else 0.0
    for profile in PROFILES:
        finished = [c for c in completed if c.app_profile == profile]
        suite[f'art_seconds_{profile}'] = float(np.mean([c.response_time for c in finished])) \
            if finished else float('nan')
        suite[f'slo_fraction_{profile}'] = float(np.mean([c.violated for c in finished])) if finished else 0.0
    return suite


def summarize_runs(bundles: List[Dict[str, float]]) -> Dict[str, Dict[str, float]]:
    """Per-metric mean and standard deviation across seeds (NaNs ignored)"""
    keys = [k for k in bundles[0] if all(isinstance(b.get(k), (int, float, np.number)) for b in bundles)]
    summary = {}
    for key in keys:
        values = np.array([float(b[key]) for b in bundles])
        finite = values[np.isfinite(values)]
        summary[key] = {
            'mean': float(finite.mean()) if finite.size else float('nan'),
            'std': float(finite.std()) if finite.size else float('nan'),
        }
    return summary
