"""
Fault-class prototypes
Per-class (mu, sigma) statistics of prototype embeddings, the Gaussian-style
distance between an embedding and a class, nearest-class assignment and the
triplet objective. Class 0 is the no-anomaly prototype.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..autodiff.tensor import Tensor, square
from ..errors import DimensionError


@dataclass
class PrototypeStats:
    mu: np.ndarray
    sigma: np.ndarray
    sigma_floor: float = 1e-2

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.maximum(np.asarray(self.sigma, dtype=np.float64), self.sigma_floor)
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 2:
            raise DimensionError(f"class stats need matching (classes, dim) arrays, got {self.mu.shape} "
                                 f"and {self.sigma.shape}")

    @property
    def classes(self) -> int:
        return self.mu.shape[0]

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    @classmethod
    def initial(cls, fault_classes: int, dim: int, sigma_floor: float = 1e-2) -> 'PrototypeStats':
        """mu_i = i / j everywhere, sigma = 0.25"""
        levels = np.arange(fault_classes + 1, dtype=np.float64) / fault_classes
        mu = np.repeat(levels[:, None], dim, axis=1)
        return cls(mu, np.full_like(mu, 0.25), sigma_floor)

    def copy(self) -> 'PrototypeStats':
        return PrototypeStats(self.mu.copy(), self.sigma.copy(), self.sigma_floor)


def proto_distance(prototype, mu: np.ndarray, sigma: np.ndarray) -> float:
    """sum over dims of (mu - P)^2 / (2 sigma^2) + ln(sigma^2) / 2"""
    prototype = np.asarray(prototype, dtype=np.float64)
    if prototype.shape != np.shape(mu) or prototype.shape != np.shape(sigma):
        raise DimensionError(f"prototype {prototype.shape} vs class stats {np.shape(mu)}, {np.shape(sigma)}")
    var = np.asarray(sigma, dtype=np.float64) ** 2
    return float(np.sum((mu - prototype) ** 2 / (2 * var) + 0.5 * np.log(var)))


def proto_distance_tensor(prototype: Tensor, mu: np.ndarray, sigma: np.ndarray) -> Tensor:
    if prototype.shape != np.shape(mu):
        raise DimensionError(f"prototype {prototype.shape} vs class mean {np.shape(mu)}")
    var = np.asarray(sigma, dtype=np.float64) ** 2
    gap = square(prototype - Tensor(mu))
    return (gap * Tensor(1.0 / (2 * var))).sum() + float(0.5 * np.sum(np.log(var)))


def class_distances(prototype, stats: PrototypeStats) -> np.ndarray:
    return np.array([proto_distance(prototype, stats.mu[i], stats.sigma[i]) for i in range(stats.classes)])


def classify(prototype, stats: PrototypeStats, fault: bool) -> int:
    """Nearest fault class (lowest index on ties) when faulty, else class 0"""
    if not fault:
        return 0
    distances = class_distances(prototype, stats)
    return int(np.argmin(distances[1:])) + 1


def triplet_loss(prototype: Tensor, label: int, stats: PrototypeStats) -> Tensor:
    """D(P, c_label) minus the distances to every other class"""
    loss = proto_distance_tensor(prototype, stats.mu[label], stats.sigma[label])
    for i in range(stats.classes):
        if i != label:
            loss = loss - proto_distance_tensor(prototype, stats.mu[i], stats.sigma[i])
    return loss


def at_class_mean(prototype, stats: PrototypeStats, label: int, atol: float = 1e-12) -> bool:
    return bool(np.allclose(np.asarray(prototype, dtype=np.float64), stats.mu[label], rtol=0.0, atol=atol))


def class_stats(prototypes: np.ndarray, labels: Sequence[int], previous: PrototypeStats) -> PrototypeStats:
    """Per-class mean/std of the assigned embeddings; empty classes keep `previous`"""
    prototypes = np.asarray(prototypes, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    mu, sigma = previous.mu.copy(), previous.sigma.copy()
    for i in range(previous.classes):
        members = prototypes[labels == i]
        if len(members):
            mu[i] = members.mean(axis=0)
            sigma[i] = members.std(axis=0)
    return PrototypeStats(mu, sigma, previous.sigma_floor)


def ema_update(stats: PrototypeStats, prototype: np.ndarray, label: int, decay: float = 0.99) -> PrototypeStats:
    updated = stats.copy()
    prototype = np.asarray(prototype, dtype=np.float64)
    mu = decay * stats.mu[label] + (1 - decay) * prototype
    var = decay * stats.sigma[label] ** 2 + (1 - decay) * (prototype - mu) ** 2
    updated.mu[label] = mu
    updated.sigma[label] = np.maximum(np.sqrt(var), stats.sigma_floor)
    return updated


def consistency(classes: Sequence[int], kinds: Sequence[frozenset], faults: Optional[Sequence[bool]] = None) -> float:
    """
    Share of fault-labelled intervals whose class equals the class most often
    assigned to the same ground-truth kind set
    """
    pairs = [(c, k) for i, (c, k) in enumerate(zip(classes, kinds))
             if c > 0 and (faults is None or faults[i])]
    if not pairs:
        return 0.0
    majority = {}
    for kind in {k for _, k in pairs}:
        assigned = [c for c, k in pairs if k == kind]
        majority[kind] = max(sorted(set(assigned)), key=assigned.count)
    return float(np.mean([c == majority[k] for c, k in pairs]))
