"""
Fault Detector Module
Scores reconstructed windows against observed ones, labels intervals with
POT thresholds (one stream for the whole cluster, one per host), ranks hosts
for diagnosis and assigns a fault class from the prototype embedding.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .pot import PotState, fault_label, fit_pot
from .prototypes import PrototypeStats, classify
from ..errors import DimensionError, NotInitializedError
from ..utils.config import PotConfig

logger = logging.getLogger(__name__)


@dataclass
class FaultScore:
    total: float
    per_host: np.ndarray

    def __repr__(self):
        return f"FaultScore(total={self.total:.4f}, hosts={np.round(self.per_host, 4).tolist()})"


@dataclass
class Diagnosis:
    ranking: List[int]
    labels: np.ndarray


@dataclass
class Assessment:
    """Everything the detector concludes about one interval"""
    score: float
    threshold: float
    label: bool
    fault_class: int
    host_scores: np.ndarray
    host_thresholds: np.ndarray
    diagnosis: Diagnosis
    prototype: Optional[np.ndarray] = None

    def extras(self) -> dict:
        return {
            'score': self.score,
            'threshold': self.threshold,
            'label': int(self.label),
            'fault_class': self.fault_class,
            'host_scores': self.host_scores,
            'host_thresholds': self.host_thresholds,
            'ranking': np.asarray(self.diagnosis.ranking, dtype=np.int64),
            'prototype': self.prototype if self.prototype is not None else np.zeros(0),
        }


def row_hosts(m: int, placement: Sequence[int], targets: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Host each window row is charged to: host rows to themselves, task rows to
    their current host (unplaced tasks to their target)
    """
    placement = np.asarray(placement, dtype=np.int64)
    if targets is None:
        targets = np.zeros_like(placement)
    targets = np.asarray(targets, dtype=np.int64)
    tasks = np.where(placement >= 0, placement, targets)
    return np.concatenate([np.arange(m, dtype=np.int64), tasks])


def fault_score(true: np.ndarray, predicted: np.ndarray, hosts: Optional[Sequence[int]] = None,
                m: Optional[int] = None) -> FaultScore:
    """
    f = ||ReLU(W - Ŵ)||^2 over aligned rows; only upward deviations count.
    `hosts` maps each row to a host for the per-host partial scores.
    """
    true = np.atleast_1d(np.asarray(true, dtype=np.float64))
    predicted = np.atleast_1d(np.asarray(predicted, dtype=np.float64))
    if true.shape != predicted.shape:
        raise DimensionError(f"cannot score {true.shape} against prediction {predicted.shape}")
    gap = np.maximum(true - predicted, 0.0)
    per_row = (gap * gap).reshape(true.shape[0], -1).sum(axis=1)
    if hosts is None:
        return FaultScore(float(per_row.sum()), np.zeros(0))
    hosts = np.asarray(hosts, dtype=np.int64)
    if hosts.shape != (per_row.shape[0],):
        raise DimensionError(f"{hosts.shape[0]} row hosts for {per_row.shape[0]} rows")
    m = int(hosts.max()) + 1 if m is None else m
    per_host = np.bincount(hosts, weights=per_row, minlength=m)
    return FaultScore(float(per_row.sum()), per_host)


def diagnose_hosts(scores: Sequence[float], thresholds: Sequence[float]) -> Diagnosis:
    """Hosts by descending score (ties by index) and their per-host labels"""
    scores = np.asarray(scores, dtype=np.float64)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if scores.shape != thresholds.shape:
        raise DimensionError(f"{scores.shape[0]} host scores for {thresholds.shape[0]} thresholds")
    ranking = [int(i) for i in np.lexsort((np.arange(scores.size), -scores))]
    return Diagnosis(ranking, scores > thresholds)


@dataclass
class FaultDetector:
    """
    Streaming detector: a global POT on the total score and one POT per host
    on the partial scores. Each interval is judged against the thresholds in
    force before its own score is absorbed.
    """
    pot: PotState
    host_pots: List[PotState] = field(default_factory=list)
    stats: Optional[PrototypeStats] = None

    @classmethod
    def calibrate(cls, scores: Sequence[float], host_scores: np.ndarray, config: PotConfig,
                  stats: Optional[PrototypeStats] = None) -> 'FaultDetector':
        host_scores = np.asarray(host_scores, dtype=np.float64)
        pot = fit_pot(scores, config)
        host_pots = [fit_pot(host_scores[:, h], config) for h in range(host_scores.shape[1])]
        logger.info("detector calibrated on %d scores: threshold %.5f", len(scores), pot.threshold)
        return cls(pot, host_pots, stats)

    @property
    def host_thresholds(self) -> np.ndarray:
        return np.array([p.threshold for p in self.host_pots])

    def assess(self, score: FaultScore, prototype: Optional[np.ndarray] = None, update: bool = True) -> Assessment:
        if not self.pot.initialized:
            raise NotInitializedError("fault detector has no calibrated threshold")
        if score.per_host.shape[0] != len(self.host_pots):
            raise DimensionError(f"{score.per_host.shape[0]} host scores for {len(self.host_pots)} host thresholds")
        threshold = self.pot.threshold
        host_thresholds = self.host_thresholds
        label = fault_label(score.total, threshold)
        fault_class = 0
        if prototype is not None and self.stats is not None:
            fault_class = classify(prototype, self.stats, label)
        assessment = Assessment(score.total, threshold, label, fault_class, score.per_host.copy(),
                                host_thresholds, diagnose_hosts(score.per_host, host_thresholds),
                                None if prototype is None else np.asarray(prototype, dtype=np.float64))
        if update:
            self.pot.update(score.total)
            for pot, value in zip(self.host_pots, score.per_host):
                pot.update(float(value))
        return assessment

    def to_dict(self) -> dict:
        return {'global': self.pot.to_dict(), 'hosts': [p.to_dict() for p in self.host_pots]}

    @classmethod
    def from_dict(cls, payload: dict, stats: Optional[PrototypeStats] = None) -> 'FaultDetector':
        return cls(PotState.from_dict(payload['global']),
                   [PotState.from_dict(p) for p in payload.get('hosts', [])], stats)
