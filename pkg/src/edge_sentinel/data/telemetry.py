"""
Telemetry
Observable state matrices, sliding windows with replication padding, and the
per-feature min-max scaler
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from ..core.cluster import ClusterState
from ..errors import DatasetError, DimensionError, UndefinedInputError
from ..utils.config import FEATURE_SETS

logger = logging.getLogger(__name__)


@dataclass
class StateMatrix:
    """
    (m + p) x n observation: host rows first (host index order), then one row
    per active task in `task_ids` order
    """
    values: np.ndarray
    task_ids: Tuple[int, ...]
    m: int

    def __post_init__(self):
        if self.values.shape[0] != self.m + len(self.task_ids):
            raise DimensionError(f"state matrix has {self.values.shape[0]} rows, expected "
                                 f"{self.m} hosts + {len(self.task_ids)} tasks")
        if not np.all(np.isfinite(self.values)):
            raise DimensionError("state matrix contains non-finite values")

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def p(self) -> int:
        return len(self.task_ids)


def state_matrix(state: ClusterState, features: str = 'basic') -> StateMatrix:
    util = state.utilization
    host_rows = util
    mean_capacity = state.capacities.mean(axis=0)
    task_rows = state.task_demands() / mean_capacity
    if features == 'extended':
        pressure = np.stack([np.maximum(0.0, util[:, 1] - 1.0), np.maximum(0.0, util[:, 2] - 1.0)], axis=1)
        host_rows = np.hstack([util, pressure])
        task_pressure = np.array([pressure[task.host] if task.host >= 0 else np.zeros(2) for task in state.tasks])
        task_rows = np.hstack([task_rows, task_pressure.reshape(len(state.tasks), 2)])
    elif features not in FEATURE_SETS:
        raise DimensionError(f"unknown feature set '{features}'")
    return StateMatrix(np.vstack([host_rows, task_rows]), tuple(state.task_ids), state.m)


def build_window(history: Sequence[StateMatrix], t: int, k: int) -> np.ndarray:
    """
    Stack {x_(t-k+1), ..., x_t} into (m + p_t) x n x k. Slots before the start
    of the history repeat x_0; a task row missing from an earlier slot repeats
    that task's earliest row inside the window.
    """
    if not history:
        raise UndefinedInputError("cannot build a window from an empty history")
    if not 0 <= t < len(history):
        raise UndefinedInputError(f"history covers intervals 0..{len(history) - 1}, asked for t={t}")
    current = history[t]
    m = current.m
    slots = [history[max(0, t - k + 1 + j)] for j in range(k)]
    window = np.zeros((m + current.p, current.n, k))
    present = np.zeros((current.p, k), dtype=bool)
    for j, snapshot in enumerate(slots):
        if snapshot.n != current.n or snapshot.m != m:
            raise DimensionError(f"history slot has shape (m={snapshot.m}, n={snapshot.n}), "
                                 f"expected (m={m}, n={current.n})")
        window[:m, :, j] = snapshot.values[:m]
        rows = {task_id: m + i for i, task_id in enumerate(snapshot.task_ids)}
        for i, task_id in enumerate(current.task_ids):
            if task_id in rows:
                window[m + i, :, j] = snapshot.values[rows[task_id]]
                present[i, j] = True
    for i in range(current.p):
        first = int(np.argmax(present[i]))
        for j in range(first):
            window[m + i, :, j] = window[m + i, :, first]
    return window


def align_rows(pred_ids: Sequence[int], next_ids: Sequence[int], m: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Row indices pairing a prediction made for `pred_ids` with a later window
    over `next_ids`: every host, then the surviving tasks in prediction order
    """
    position = {task_id: i for i, task_id in enumerate(next_ids)}
    pred_idx = list(range(m))
    next_idx = list(range(m))
    for i, task_id in enumerate(pred_ids):
        if task_id in position:
            pred_idx.append(m + i)
            next_idx.append(m + position[task_id])
    return np.asarray(pred_idx, dtype=np.int64), np.asarray(next_idx, dtype=np.int64)


class Scaler:
    """Per-feature min-max scaling fitted once and then frozen"""

    def __init__(self, minimum: np.ndarray = None, maximum: np.ndarray = None):
        self.min = None if minimum is None else np.asarray(minimum, dtype=np.float64)
        self.max = None if maximum is None else np.asarray(maximum, dtype=np.float64)
        if self.min is not None and np.any(self.max < self.min):
            raise DimensionError("scaler maximum below minimum")

    @property
    def fitted(self) -> bool:
        return self.min is not None

    def fit(self, matrices: Iterable[np.ndarray]) -> 'Scaler':
        """Fit on (rows, n) matrices or (rows, n, k) windows"""
        lo = hi = None
        for values in matrices:
            values = np.asarray(values)
            flat = np.moveaxis(values, 1, -1).reshape(-1, values.shape[1])
            if flat.size == 0:
                continue
            lo = flat.min(axis=0) if lo is None else np.minimum(lo, flat.min(axis=0))
            hi = flat.max(axis=0) if hi is None else np.maximum(hi, flat.max(axis=0))
        if lo is None:
            raise UndefinedInputError("cannot fit a scaler without data")
        self.min, self.max = lo, hi
        return self

    def normalize(self, window: np.ndarray) -> np.ndarray:
        """Scale axis 1 (features) into [0, 1]; constant features map to 0"""
        if not self.fitted:
            raise UndefinedInputError("scaler is not fitted")
        window = np.asarray(window, dtype=np.float64)
        if window.shape[1] != self.min.size:
            raise DimensionError(f"window has {window.shape[1]} features, scaler {self.min.size}")
        shape = (1, -1) + (1,) * (window.ndim - 2)
        lo = self.min.reshape(shape)
        span = (self.max - self.min).reshape(shape)
        with np.errstate(divide='ignore', invalid='ignore'):
            scaled = np.where(span > 0, (window - lo) / np.where(span > 0, span, 1.0), 0.0)
        return np.clip(scaled, 0.0, 1.0)

    def to_text(self) -> str:
        return ''.join(f"{float(lo)!r},{float(hi)!r}\n" for lo, hi in zip(self.min, self.max))

    def save(self, path: str) -> None:
        with open(path, 'w') as handle:
            handle.write(self.to_text())

    @classmethod
    def load(cls, path: str) -> 'Scaler':
        try:
            with open(path) as handle:
                pairs = [line.strip().split(',') for line in handle if line.strip()]
            lo = np.array([float(a) for a, _ in pairs])
            hi = np.array([float(b) for _, b in pairs])
        except FileNotFoundError:
            raise DatasetError(f"scaler file '{path}' not found")
        except ValueError:
            raise DatasetError(f"scaler file '{path}' is corrupted")
        return cls(lo, hi)
