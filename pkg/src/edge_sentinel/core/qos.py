"""
Quality-of-service scores
"""

from typing import Sequence

import numpy as np

from ..errors import ParameterError, UndefinedInputError


def check_weights(alpha: float, beta: float) -> None:
    if alpha < 0 or beta < 0 or alpha + beta > 1 + 1e-12:
        raise ParameterError(f"QoS weights must satisfy alpha, beta >= 0 and alpha + beta <= 1, "
                             f"got alpha={alpha}, beta={beta}")


def qos_value(art: float, aec: float, alpha: float, beta: float) -> float:
    check_weights(alpha, beta)
    return 1.0 - alpha * art - beta * aec


def compute_qos(outcome, alpha: float = 0.5, beta: float = 0.5) -> float:
    """1 - alpha * ART - beta * AEC of one interval"""
    return qos_value(outcome.art, outcome.aec, alpha, beta)


def jain_fairness(values: Sequence[float]) -> float:
    """(sum x)^2 / (n * sum x^2); 1.0 for perfectly equal values"""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise UndefinedInputError("Jain's fairness index is undefined for an empty list")
    if np.any(x <= 0):
        raise ParameterError("Jain's fairness index needs strictly positive values")
    return float(x.sum() ** 2 / (x.size * np.sum(x * x)))
