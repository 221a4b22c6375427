"""
Peak-over-threshold dynamic thresholding
Scores above an initial empirical quantile are peaks; a generalized Pareto
tail fitted to the peak excesses by the method of moments turns the risk
level q into the final anomaly threshold.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Tuple

import numpy as np

from ..errors import NotInitializedError, ParameterError
from ..utils.config import PotConfig

logger = logging.getLogger(__name__)


def _epsilon(threshold: float) -> float:
    return max(1e-8 * abs(threshold), 1e-12)


def gpd_moments(count: int, total: float, total_sq: float) -> Tuple[float, float]:
    """
    (shape, scale) from the mean and variance of the excesses; one peak or no
    spread falls back to the exponential tail (shape 0, scale = mean)
    """
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0)
    if count < 2 or var <= 1e-300:
        return 0.0, mean
    ratio = mean * mean / var
    return 0.5 * (1.0 - ratio), 0.5 * mean * (ratio + 1.0)


def tail_quantile(init_threshold: float, shape: float, scale: float, risk: float,
                  total: int, peaks: int) -> float:
    r = risk * total / peaks
    if abs(shape) < 1e-8:
        z = init_threshold - scale * math.log(r)
    else:
        z = init_threshold + (scale / shape) * (r ** (-shape) - 1.0)
    return max(z, init_threshold + _epsilon(init_threshold))


@dataclass
class PotState:
    n_init: int = 120
    level: float = 0.98
    risk: float = 1e-2
    init_threshold: float = float('nan')
    shape: float = 0.0
    scale: float = 0.0
    peaks: int = 0
    total: int = 0
    excess_sum: float = 0.0
    excess_sq_sum: float = 0.0
    threshold: float = float('nan')
    initialized: bool = False

    @classmethod
    def from_config(cls, config: PotConfig) -> 'PotState':
        if not 0 < config.risk < 1 or not 0 < config.level < 1:
            raise ParameterError(f"POT needs 0 < risk < 1 and 0 < level < 1, got {config.risk}, {config.level}")
        return cls(n_init=config.n_init, level=config.level, risk=config.risk)

    def initialize(self, scores: Iterable[float]) -> float:
        data = np.asarray(list(scores), dtype=np.float64)
        if data.size == 0:
            raise NotInitializedError("POT initialisation needs at least one score")
        if data.size < self.n_init:
            logger.warning("POT initialised on %d scores (configured minimum %d)", data.size, self.n_init)
        ordered = np.sort(data)
        self.init_threshold = float(ordered[min(int(self.level * data.size), data.size - 1)])
        excesses = data[data > self.init_threshold] - self.init_threshold
        self.total = int(data.size)
        self.peaks = int(excesses.size)
        self.excess_sum = float(excesses.sum())
        self.excess_sq_sum = float(np.sum(excesses * excesses))
        self.initialized = True
        self._refit()
        return self.threshold

    def _refit(self) -> None:
        if self.peaks == 0:
            self.shape, self.scale = 0.0, 0.0
            self.threshold = self.init_threshold + _epsilon(self.init_threshold)
            return
        self.shape, self.scale = gpd_moments(self.peaks, self.excess_sum, self.excess_sq_sum)
        if self.scale <= 0:
            self.threshold = self.init_threshold + _epsilon(self.init_threshold)
            return
        self.threshold = tail_quantile(self.init_threshold, self.shape, self.scale, self.risk,
                                       self.total, self.peaks)

    def update(self, score: float) -> float:
        """Account for one more score and return the refreshed threshold"""
        if not self.initialized:
            raise NotInitializedError("POT threshold used before initialisation")
        self.total += 1
        if score > self.init_threshold:
            excess = float(score) - self.init_threshold
            self.peaks += 1
            self.excess_sum += excess
            self.excess_sq_sum += excess * excess
        self._refit()
        return self.threshold

    def threshold_at(self, risk: float) -> float:
        """Threshold the current fit gives for another risk level"""
        if not self.initialized:
            raise NotInitializedError("POT threshold used before initialisation")
        if self.peaks == 0 or self.scale <= 0:
            return self.init_threshold + _epsilon(self.init_threshold)
        return tail_quantile(self.init_threshold, self.shape, self.scale, risk, self.total, self.peaks)

    def to_dict(self) -> Dict[str, object]:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, payload: Dict[str, object]) -> 'PotState':
        state = cls()
        for key, value in payload.items():
            if hasattr(state, key):
                setattr(state, key, float('nan') if value is None else value)
        return state


def pot_update(state: PotState, score: float) -> Tuple[PotState, float]:
    return state, state.update(score)


def fit_pot(scores: Iterable[float], config: PotConfig) -> PotState:
    """Initialise on the first n_init scores and stream the rest"""
    scores = list(scores)
    state = PotState.from_config(config)
    state.initialize(scores[:config.n_init])
    for score in scores[config.n_init:]:
        state.update(score)
    return state


def fault_label(score: float, threshold: float) -> bool:
    return bool(score > threshold)
