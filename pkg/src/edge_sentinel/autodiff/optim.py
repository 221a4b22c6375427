"""
Optimisers over leaf gradients: Adam, AdamW (decoupled weight decay) and a
cosine-annealing learning-rate schedule with warm restarts
"""

import math
from typing import Iterable, List, Tuple

import numpy as np

from .tensor import Tensor
from ..errors import ParameterError


class Adam:
    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        if lr < 0:
            raise ParameterError(f"learning rate must be >= 0, got {lr}")
        self.params: List[Tensor] = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.steps = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _gradient(self, p: Tensor) -> np.ndarray:
        # L2 penalty folded into the gradient
        return p.grad + self.weight_decay * p.data if self.weight_decay else p.grad

    def _decay(self, p: Tensor) -> None:
        pass

    def step(self) -> None:
        self.steps += 1
        beta1, beta2 = self.betas
        correction1 = 1.0 - beta1 ** self.steps
        correction2 = 1.0 - beta2 ** self.steps
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            grad = self._gradient(p)
            self._decay(p)
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad * grad
            p.data -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


class AdamW(Adam):
    """Adam with weight decay applied directly to the weights, outside the moments"""

    def _gradient(self, p: Tensor) -> np.ndarray:
        return p.grad

    def _decay(self, p: Tensor) -> None:
        if self.weight_decay:
            p.data -= self.lr * self.weight_decay * p.data


class CosineAnnealingWarmRestarts:
    """
    lr = eta_min + (base - eta_min) * (1 + cos(pi * t_cur / t_i)) / 2, with the
    cycle length multiplied by `mult` at every restart
    """

    def __init__(self, optimizer: Adam, period: int, mult: int = 1, eta_min: float = 0.0):
        if period < 1 or mult < 1:
            raise ParameterError(f"cosine annealing needs period >= 1 and mult >= 1, got {period}, {mult}")
        self.optimizer = optimizer
        self.base_lr = optimizer.lr
        self.eta_min = eta_min
        self.period = period
        self.mult = mult
        self.t_cur = 0
        self.t_i = period
        self.restarts = 0

    def current_lr(self) -> float:
        return self.eta_min + (self.base_lr - self.eta_min) * (1 + math.cos(math.pi * self.t_cur / self.t_i)) / 2

    def step(self) -> float:
        self.t_cur += 1
        if self.t_cur >= self.t_i:
            self.t_cur -= self.t_i
            self.t_i *= self.mult
            self.restarts += 1
        self.optimizer.lr = self.current_lr()
        return self.optimizer.lr
