"""
Schedule Optimizer
Gradient descent on a relaxed scheduling decision against the surrogate's
optimisation loss, the capacity-aware projection back to a one-hot decision,
online fine-tuning of the surrogate, and the policy that ties them together
inside an episode.
"""

import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .baselines import fits, least_utilized, resident_load
from .cluster import ClusterState, CoSimulator, IntervalOutcome, one_hot
from .detector import Assessment, FaultDetector, fault_score, row_hosts
from .prototypes import (PrototypeStats, at_class_mean, classify, ema_update, proto_distance, proto_distance_tensor,
                         triplet_loss)
from .surrogate import SurrogateModel, relaxed_schedule
from .trainer import Artifacts, reconstruction_loss
from ..autodiff import functional as F
from ..autodiff.optim import Adam, AdamW, CosineAnnealingWarmRestarts
from ..autodiff.tensor import Tensor, take_rows
from ..data.telemetry import Scaler, align_rows
from ..errors import DimensionError
from ..utils.config import OptConfig
from ..utils.exporter import attention_rows, encode_floats

logger = logging.getLogger(__name__)


def optimization_loss(next_window: np.ndarray, predicted: Tensor, prototype: Tensor,
                      stats: PrototypeStats) -> Tensor:
    """||ReLU(W_t+1 - Ŵ_t)||^2 + D(P_t, c_0) over aligned rows"""
    target = Tensor(np.asarray(next_window, dtype=np.float64))
    if target.shape != predicted.shape:
        raise DimensionError(f"next window {target.shape} vs prediction {predicted.shape}")
    return F.squared_relu_gap(target, predicted) + proto_distance_tensor(prototype, stats.mu[0], stats.sigma[0])


def project_to_feasible(relaxed: np.ndarray, state: ClusterState) -> np.ndarray:
    """
    One-hot decision from a row-stochastic matrix. Rows are settled in
    descending confidence; a target that cannot hold the task keeps an
    existing task where it is and sends a new task to the least-utilised
    feasible host (least-utilised overall when none fits).
    """
    relaxed = np.asarray(relaxed, dtype=np.float64)
    if relaxed.shape != (state.p, state.m):
        raise DimensionError(f"decision shape {relaxed.shape}, expected ({state.p}, {state.m})")
    if state.p == 0:
        return np.zeros((0, state.m))
    capacities = state.capacities
    demands = state.task_demands()
    placement = state.placement
    load = resident_load(state)
    targets = placement.copy()
    confidence = relaxed.max(axis=1)
    for i in np.argsort(-confidence, kind='stable'):
        wanted = int(np.argmax(relaxed[i]))
        current = placement[i]
        if current >= 0:
            load[current] -= demands[i]
            host = wanted if wanted == current or fits(load[[wanted]], demands[i], capacities[[wanted]])[0] \
                else current
        elif fits(load[[wanted]], demands[i], capacities[[wanted]])[0]:
            host = wanted
        else:
            host = least_utilized(load, capacities, demands[i])
        load[host] += demands[i]
        targets[i] = host
    return one_hot(targets, state.m)


@contextmanager
def frozen(model: SurrogateModel):
    """Weights drop out of the graph while the decision is optimised"""
    params = model.parameters()
    for p in params:
        p.requires_grad = False
    try:
        yield model
    finally:
        for p in params:
            p.requires_grad = True


@dataclass
class TrajectoryPoint:
    iteration: int
    loss: float
    nap_distance: float
    fault_class: int
    lr: float
    prototype: np.ndarray
    decision: np.ndarray


@dataclass
class OptimizationResult:
    schedule: np.ndarray
    trajectory: List[TrajectoryPoint] = field(default_factory=list)
    best_iteration: int = 0

    @property
    def losses(self) -> List[float]:
        return [point.loss for point in self.trajectory]


def optimize_schedule(model: SurrogateModel, window: np.ndarray, s_init: np.ndarray, state: ClusterState,
                      cosim: CoSimulator, next_window_fn, scaler: Scaler, stats: PrototypeStats,
                      config: OptConfig, threshold: float = math.inf) -> OptimizationResult:
    """
    Descend L_O over row-softmax relaxed logits. Each iteration queries the
    co-simulator once with the projected decision for the next window; the
    projection of the lowest-loss iterate (first on ties) is returned.

    window: normalised W_t; next_window_fn maps a next state to its raw window;
    `threshold` labels each iterate for the class reported in the trajectory.
    """
    m = state.m
    p = state.p
    s_init = np.asarray(s_init, dtype=np.float64)
    if s_init.shape != (p, m):
        raise DimensionError(f"initial decision {s_init.shape}, expected ({p}, {m})")
    logits = Tensor(s_init * config.init_logit_scale, requires_grad=True)
    optimizer = Adam([logits], lr=config.lr)
    annealing = CosineAnnealingWarmRestarts(optimizer, config.period, config.mult)
    placement = state.placement
    hosts = row_hosts(m, placement, s_init.argmax(axis=1) if p else None)

    result = OptimizationResult(schedule=np.zeros((p, m)))
    best = math.inf
    was_training = model.training
    model.eval()
    with frozen(model):
        for iteration in range(config.iterations):
            relaxed = relaxed_schedule(logits, config.temperature) if p else Tensor(np.zeros((0, m)))
            decision = project_to_feasible(relaxed.data, state)
            next_state, _ = cosim.simulate(state, decision)
            target = scaler.normalize(next_window_fn(next_state))
            output = model(window, relaxed, placement)
            pred_idx, next_idx = align_rows(state.task_ids, next_state.task_ids, m)
            loss = optimization_loss(target[next_idx], take_rows(output.window, pred_idx), output.prototype, stats)
            prototype = output.prototype.data.copy()
            nap = proto_distance(prototype, stats.mu[0], stats.sigma[0])
            score = fault_score(target[next_idx], output.window.data[pred_idx], hosts[pred_idx], m)
            result.trajectory.append(TrajectoryPoint(
                iteration, loss.item(), nap, classify(prototype, stats, score.total > threshold),
                optimizer.lr, prototype, decision,
            ))
            if loss.item() < best:
                best, result.best_iteration, result.schedule = loss.item(), iteration, decision
            if p:
                logits.zero_grad()
                loss.backward()
                optimizer.step()
                annealing.step()
    model.train(was_training)
    logger.debug("interval %d: L_O %.4f -> %.4f (best at %d)", state.t, result.losses[0], result.losses[-1],
                 result.best_iteration)
    return result


@dataclass
class FineTuneStep:
    loss_r: float
    loss_t: float
    stepped: bool


def fine_tune_online(model: SurrogateModel, optimizer: AdamW, window: np.ndarray, schedule: np.ndarray,
                     placement: Sequence[int], task_ids: Sequence[int], next_window: np.ndarray,
                     next_task_ids: Sequence[int], stats: PrototypeStats, fault_class: int,
                     include_triplet: bool = True) -> FineTuneStep:
    """
    One gradient step on L_R + L_T with normalised windows. Runs in eval mode
    so normalisation statistics stay frozen; a non-finite loss or an all-zero
    gradient leaves the weights untouched. L_T is dropped while the prototype
    already sits on its own class mean: the pull term is at its optimum there.
    """
    model.eval()
    optimizer.zero_grad()
    output = model(window, schedule, placement)
    pred_idx, next_idx = align_rows(task_ids, next_task_ids, model.config.m)
    loss_r = reconstruction_loss(take_rows(output.window, pred_idx), next_window[next_idx])
    loss = loss_r
    loss_t = None
    if include_triplet and not at_class_mean(output.prototype.data, stats, fault_class):
        loss_t = triplet_loss(output.prototype, fault_class, stats)
        loss = loss + loss_t
    value = loss.item()
    step = FineTuneStep(loss_r.item(), loss_t.item() if loss_t is not None else 0.0, False)
    if not math.isfinite(value):
        logger.warning("interval fine-tune skipped: non-finite loss %s", value)
        return step
    loss.backward()
    if all(p.grad is None or not np.any(p.grad) for p in optimizer.params):
        optimizer.zero_grad()
        return step
    optimizer.step()
    optimizer.zero_grad()
    step.stepped = True
    return step


class SurrogatePolicy:
    """
    Per interval: warm-started decision optimisation in `decide`; in `observe`
    the realised next window scores the interval, the detector labels,
    classifies and ranks hosts, and the surrogate is fine-tuned.
    """
    name = 'surrogate'

    def __init__(self, artifacts: Artifacts, config: OptConfig, record_attention: bool = True):
        self.model = artifacts.model.eval()
        self.stats = artifacts.stats.copy()
        self.detector: FaultDetector = artifacts.detector
        self.detector.stats = self.stats
        self.scaler = artifacts.scaler
        self.config = config
        self.record_attention = record_attention
        self.optimizer = AdamW(self.model.parameters(), lr=config.fine_tune_lr,
                               weight_decay=artifacts.config.weight_decay)
        self.last_extras: Dict[str, object] = {}
        self.trajectory_rows: List[Dict[str, object]] = []
        self.attention: List[Dict[str, object]] = []
        self.prototype_rows: List[Dict[str, object]] = []
        self.results: List[OptimizationResult] = []
        self.assessments: List[Assessment] = []
        self.fine_tune_steps: List[FineTuneStep] = []
        self._window: Optional[np.ndarray] = None

    def initial_decision(self, state: ClusterState, context) -> np.ndarray:
        """Surviving tasks keep their previous decision; new tasks start on a random host"""
        targets = np.array([context.previous_targets.get(task.id, -1) for task in state.tasks], dtype=np.int64)
        fresh = targets < 0
        targets[fresh] = context.rng.integers(0, state.m, size=int(fresh.sum()))
        return one_hot(targets, state.m)

    def decide(self, state: ClusterState, context) -> np.ndarray:
        self._window = self.scaler.normalize(context.window())
        result = optimize_schedule(self.model, self._window, self.initial_decision(state, context), state,
                                   context.cosim, context.next_window, self.scaler, self.stats, self.config,
                                   self.detector.pot.threshold)
        self.results.append(result)
        for point in result.trajectory:
            self.trajectory_rows.append({
                't': state.t, 'iteration': point.iteration, 'L_O': point.loss, 'D_nap': point.nap_distance,
                'fault_class': point.fault_class, 'lr': point.lr, 'prototype': encode_floats(point.prototype),
            })
        return result.schedule

    def observe(self, state: ClusterState, schedule: np.ndarray, next_state: ClusterState,
                outcome: IntervalOutcome, context) -> None:
        m = state.m
        target = self.scaler.normalize(context.next_window(next_state))
        placement = state.placement
        output = self.model(self._window, schedule, placement)
        pred_idx, next_idx = align_rows(state.task_ids, next_state.task_ids, m)
        hosts = row_hosts(m, placement, schedule.argmax(axis=1) if state.p else None)[pred_idx]
        score = fault_score(target[next_idx], output.window.data[pred_idx], hosts, m)
        prototype = output.prototype.data.copy()
        assessment = self.detector.assess(score, prototype)
        self.assessments.append(assessment)
        self.last_extras = assessment.extras()
        self.prototype_rows.append({'t': state.t, 'label': int(assessment.label),
                                    'fault_class': assessment.fault_class, 'prototype': encode_floats(prototype)})
        if self.record_attention:
            for source, weights in output.attention.items():
                self.attention.extend(attention_rows(state.t, source, weights))

        if self.config.fine_tune:
            step = fine_tune_online(self.model, self.optimizer, self._window, schedule, placement,
                                    state.task_ids, target, next_state.task_ids, self.stats,
                                    assessment.fault_class)
            self.fine_tune_steps.append(step)
            self.stats = ema_update(self.stats, prototype, assessment.fault_class, self.config.ema_decay)
            self.detector.stats = self.stats
