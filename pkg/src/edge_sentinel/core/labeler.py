"""
Ground-truth fault labeling
A host is faulty in an interval when one of its cpu/ram/disk utilizations
exceeds a dynamic threshold derived from its recent history.
"""

from typing import FrozenSet, List, Sequence, Tuple

import numpy as np

RESOURCES = ('cpu', 'ram', 'disk')


def dynamic_thresholds(history: Sequence[np.ndarray], m: int, kappa: float = 3.0,
                       static_cap: float = 0.9) -> np.ndarray:
    """
    max(static_cap, mean + kappa * std) per (host, resource) over the history
    window; the static cap alone when there is no history
    """
    if len(history) == 0:
        return np.full((m, len(RESOURCES)), static_cap)
    window = np.stack(history)
    rolling = window.mean(axis=0) + kappa * window.std(axis=0)
    return np.maximum(static_cap, rolling)


def label_utilization(utilization: np.ndarray, history: Sequence[np.ndarray], kappa: float = 3.0,
                      static_cap: float = 0.9) -> Tuple[np.ndarray, List[FrozenSet[str]]]:
    thresholds = dynamic_thresholds(history, utilization.shape[0], kappa, static_cap)
    exceeded = utilization > thresholds
    kinds = [frozenset(RESOURCES[r] for r in np.flatnonzero(row)) for row in exceeded]
    return exceeded.any(axis=1), kinds


def label_ground_truth(state, kappa: float = 3.0,
                       static_cap: float = 0.9) -> Tuple[np.ndarray, List[FrozenSet[str]]]:
    """Per-host (flag, kind-set) for the interval that produced `state`"""
    return label_utilization(state.utilization, state.history, kappa, static_cap)


def format_kinds(kinds: Sequence[FrozenSet[str]]) -> str:
    return ';'.join('|'.join(r for r in RESOURCES if r in kind) for kind in kinds)


def parse_kinds(text: str, m: int) -> List[FrozenSet[str]]:
    if not isinstance(text, str):
        return [frozenset() for _ in range(m)]
    parts = text.split(';')
    if len(parts) != m:
        parts = (parts + [''] * m)[:m]
    return [frozenset(p for p in part.split('|') if p) for part in parts]
