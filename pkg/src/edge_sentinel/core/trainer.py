"""
Offline Trainer
Self-supervised training of the surrogate on logged (W_t, S_t, W_t+1)
records: reconstruction of the next window plus a prototype triplet loss
whose class labels come from the POT detector and the current class stats.
"""

import hashlib
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .detector import FaultDetector, fault_score, row_hosts
from .migration_graph import decision_targets
from .prototypes import PrototypeStats, class_stats, classify, triplet_loss
from .surrogate import SurrogateModel, SurrogateOutput
from ..autodiff.checkpoint import load_checkpoint, save_checkpoint
from ..autodiff.optim import AdamW
from ..autodiff.tensor import Tensor, square, take_rows
from ..data.dataset import DatasetRecord, DatasetStore
from ..data.telemetry import Scaler, align_rows
from ..errors import DatasetError, DimensionError, TrainingError, UndefinedInputError
from ..utils.config import ExperimentConfig, PotConfig, TrainConfig, read_key_values
from ..utils.exporter import read_json, write_csv, write_json
from ..utils.metrics import detection_metrics

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ('epoch', 'L_R', 'L_T', 'val_L_R', 'accuracy', 'precision', 'recall', 'f1',
                 'threshold', 'faults')


def reconstruction_loss(predicted, target):
    """Sum of squared differences; a Tensor prediction keeps the graph"""
    if isinstance(predicted, Tensor):
        target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
        if predicted.shape != target.shape:
            raise DimensionError(f"prediction {predicted.shape} vs target {target.shape}")
        return square(predicted - Tensor(target)).sum()
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise DimensionError(f"prediction {predicted.shape} vs target {target.shape}")
    return float(np.sum((predicted - target) ** 2))


def parameter_checksum(model: SurrogateModel) -> str:
    digest = hashlib.sha256()
    for name, value in model.state_dict().items():
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(value, dtype='<f8').tobytes())
    return digest.hexdigest()


@dataclass
class RecordPass:
    """One forward pass over a record, aligned with its successor window"""
    output: SurrogateOutput
    predicted: Tensor
    target: np.ndarray
    hosts: np.ndarray

    @property
    def prototype(self) -> np.ndarray:
        return self.output.prototype.data.copy()


def forward_record(model: SurrogateModel, record: DatasetRecord, scaler: Scaler) -> RecordPass:
    m = model.config.m
    window = scaler.normalize(record.window)
    target = scaler.normalize(record.next_window)
    output = model(window, record.schedule, record.placement)
    pred_idx, next_idx = align_rows(record.task_ids, record.next_task_ids, m)
    hosts = row_hosts(m, record.placement, decision_targets(record.schedule))[pred_idx]
    return RecordPass(output, take_rows(output.window, pred_idx), target[next_idx], hosts)


@dataclass
class StatsPass:
    scores: np.ndarray
    host_scores: np.ndarray
    prototypes: np.ndarray
    labels: np.ndarray
    classes: np.ndarray
    detector: FaultDetector
    stats: PrototypeStats


def compute_class_stats(model: SurrogateModel, records: Sequence[DatasetRecord], scaler: Scaler,
                        stats: PrototypeStats, pot_config: PotConfig, bootstrap: bool = False) -> StatsPass:
    """
    Score every record in eval mode, fit the POT thresholds on those scores,
    label and classify each record and refit the per-class statistics.
    With `bootstrap` the faulty records are dealt round-robin to classes 1..j.
    """
    if not records:
        raise UndefinedInputError("class statistics need at least one record")
    was_training = model.training
    model.eval()
    m = model.config.m
    scores, host_scores, prototypes = [], [], []
    for record in records:
        result = forward_record(model, record, scaler)
        score = fault_score(result.target, result.predicted.data, result.hosts, m)
        scores.append(score.total)
        host_scores.append(score.per_host)
        prototypes.append(result.prototype)
    model.train(was_training)

    scores = np.asarray(scores)
    prototypes = np.asarray(prototypes)
    detector = FaultDetector.calibrate(scores, np.asarray(host_scores), pot_config)
    labels = scores > detector.pot.threshold
    classes = np.zeros(len(records), dtype=np.int64)
    faulty_seen = 0
    for i, label in enumerate(labels):
        if not label:
            continue
        if bootstrap:
            classes[i] = faulty_seen % (stats.classes - 1) + 1
            faulty_seen += 1
        else:
            classes[i] = classify(prototypes[i], stats, True)
    refit = class_stats(prototypes, classes, stats)
    detector.stats = refit
    return StatsPass(scores, np.asarray(host_scores), prototypes, labels, classes, detector, refit)


@dataclass
class TrainingResult:
    model: SurrogateModel
    stats: PrototypeStats
    detector: FaultDetector
    scaler: Scaler
    curves: List[Dict[str, float]] = field(default_factory=list)
    best_epoch: int = 0
    checksum: str = ''

    @property
    def first_loss(self) -> float:
        return self.curves[0]['L_R'] if self.curves else float('nan')

    @property
    def final_loss(self) -> float:
        return self.curves[-1]['L_R'] if self.curves else float('nan')


class OfflineTrainer:
    def __init__(self, model: SurrogateModel, config: TrainConfig, pot_config: PotConfig, scaler: Scaler):
        self.model = model
        self.config = config
        self.pot_config = pot_config
        self.scaler = scaler
        self.optimizer = AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)

    def split(self, records: Sequence[DatasetRecord]) -> Tuple[List[DatasetRecord], List[DatasetRecord]]:
        """Leading records train, the trailing val_fraction validates"""
        records = list(records)
        n_val = int(len(records) * self.config.val_fraction)
        if n_val == 0 or n_val == len(records):
            return records, []
        return records[:-n_val], records[-n_val:]

    def validation_loss(self, records: Sequence[DatasetRecord]) -> float:
        was_training = self.model.training
        self.model.eval()
        losses = []
        for record in records:
            result = forward_record(self.model, record, self.scaler)
            losses.append(reconstruction_loss(result.predicted.data, result.target))
        self.model.train(was_training)
        return float(np.mean(losses)) if losses else float('nan')

    def _step(self, losses: List[Tensor]) -> None:
        total = losses[0]
        for loss in losses[1:]:
            total = total + loss
        if len(losses) > 1:
            total = total * (1.0 / len(losses))
        total.backward()
        self.optimizer.step()
        self.optimizer.zero_grad()

    def train_epoch(self, records: Sequence[DatasetRecord], stats: PrototypeStats,
                    classes: np.ndarray) -> Tuple[float, float]:
        self.model.train()
        self.optimizer.zero_grad()
        sum_r = sum_t = 0.0
        pending: List[Tensor] = []
        for record, label in zip(records, classes):
            result = forward_record(self.model, record, self.scaler)
            loss_r = reconstruction_loss(result.predicted, result.target)
            loss_t = triplet_loss(result.output.prototype, int(label), stats)
            loss = loss_r + loss_t
            if not math.isfinite(loss.item()):
                raise TrainingError(f"non-finite loss at interval {record.t}: "
                                    f"L_R={loss_r.item()}, L_T={loss_t.item()}")
            sum_r += loss_r.item()
            sum_t += loss_t.item()
            pending.append(loss)
            if len(pending) >= self.config.batch_size:
                self._step(pending)
                pending = []
        if pending:
            self._step(pending)
        return sum_r / len(records), sum_t / len(records)

    def fit(self, dataset: DatasetStore) -> TrainingResult:
        if len(dataset) == 0:
            raise UndefinedInputError("cannot train on an empty dataset")
        cfg = self.config
        train_records, val_records = self.split(dataset.records)
        if cfg.max_records:
            train_records = train_records[:cfg.max_records]
        stats = PrototypeStats.initial(cfg.fault_classes, self.model.config.proto_dim, cfg.sigma_floor)
        logger.info("training on %d records (%d held out), %d epochs max", len(train_records),
                    len(val_records), cfg.epochs)

        curves = []
        best_loss, best_epoch, best_state, best_stats = float('inf'), 0, None, stats
        stale = 0
        for epoch in range(cfg.epochs):
            labelled = compute_class_stats(self.model, train_records, self.scaler, stats,
                                           self.pot_config, bootstrap=epoch == 0)
            stats = labelled.stats
            loss_r, loss_t = self.train_epoch(train_records, stats, labelled.classes)
            val_loss = self.validation_loss(val_records) if val_records else loss_r
            truth = [r.faulty for r in train_records]
            report = detection_metrics(labelled.labels, truth)
            curves.append({
                'epoch': epoch, 'L_R': loss_r, 'L_T': loss_t, 'val_L_R': val_loss,
                'accuracy': report.accuracy, 'precision': report.precision, 'recall': report.recall,
                'f1': report.f1, 'threshold': labelled.detector.pot.threshold,
                'faults': int(labelled.labels.sum()),
            })
            logger.info("epoch %d: L_R=%.5f L_T=%.4f val L_R=%.5f F1=%.3f", epoch, loss_r, loss_t,
                        val_loss, report.f1)
            if val_loss < best_loss:
                best_loss, best_epoch, stale = val_loss, epoch, 0
                best_state, best_stats = self.model.state_dict(), stats.copy()
            else:
                stale += 1
                if stale >= cfg.patience:
                    logger.info("early stop after epoch %d (best %d)", epoch, best_epoch)
                    break

        if best_state is not None:
            self.model.load_state_dict(best_state)
        final = compute_class_stats(self.model, train_records, self.scaler, best_stats, self.pot_config)
        self.model.eval()
        return TrainingResult(self.model, final.stats, final.detector, self.scaler, curves, best_epoch,
                              parameter_checksum(self.model))


def train_offline(dataset: DatasetStore, config: ExperimentConfig) -> TrainingResult:
    if len(dataset) == 0:
        raise UndefinedInputError("cannot train on an empty dataset")
    scaler = dataset.scaler if dataset.scaler.fitted else dataset.fit_scaler()
    model = SurrogateModel(config.model_config())
    if (model.config.m, model.config.n, model.config.k) != (dataset.m, dataset.n, dataset.k):
        raise DimensionError(f"dataset has m={dataset.m}, n={dataset.n}, k={dataset.k}; the configuration "
                             f"asks for m={model.config.m}, n={model.config.n}, k={model.config.k}")
    trainer = OfflineTrainer(model, config.train_config(), config.pot_config(), scaler)
    return trainer.fit(dataset)


@dataclass
class Artifacts:
    model: SurrogateModel
    stats: PrototypeStats
    detector: FaultDetector
    scaler: Scaler
    config: ExperimentConfig


def save_artifacts(directory: str, result: TrainingResult, config: ExperimentConfig) -> None:
    os.makedirs(directory, exist_ok=True)
    tensors = result.model.state_dict()
    tensors['proto.mu'] = result.stats.mu
    tensors['proto.sigma'] = result.stats.sigma
    save_checkpoint(os.path.join(directory, 'model'), tensors)
    result.scaler.save(os.path.join(directory, 'scaler'))
    write_json(result.detector.to_dict(), os.path.join(directory, 'pot.json'))
    with open(os.path.join(directory, 'config'), 'w') as handle:
        handle.write(config.to_text())
    if result.curves:
        write_csv(result.curves, os.path.join(directory, 'loss_curves.csv'), columns=CURVE_COLUMNS)
    logger.info("checkpoint (best epoch %d) written to %s", result.best_epoch, directory)


def load_artifacts(directory: str) -> Artifacts:
    config_path = os.path.join(directory, 'config')
    if not os.path.exists(config_path):
        raise DatasetError(f"checkpoint directory '{directory}' has no config file")
    config = ExperimentConfig.from_mapping(read_key_values(config_path))
    tensors = load_checkpoint(os.path.join(directory, 'model'))
    if 'proto.mu' not in tensors or 'proto.sigma' not in tensors:
        raise DatasetError(f"checkpoint in '{directory}' lacks prototype statistics")
    stats = PrototypeStats(tensors.pop('proto.mu'), tensors.pop('proto.sigma'), config.sigma_floor)
    model = SurrogateModel(config.model_config())
    model.load_state_dict(tensors)
    model.eval()
    detector = FaultDetector.from_dict(read_json(os.path.join(directory, 'pot.json')), stats)
    return Artifacts(model, stats, detector, Scaler.load(os.path.join(directory, 'scaler')), config)
