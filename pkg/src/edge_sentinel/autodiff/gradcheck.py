"""
Finite-difference gradient checking
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Sequence, Union

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    tol: float
    errors: Dict[str, float] = field(default_factory=dict)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), 1e-8)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def grad_check(fn: Callable[..., Tensor], inputs: Union[Tensor, Sequence[Tensor]],
               eps: float = 1e-4, tol: float = 1e-4) -> GradCheckReport:
    """
    Compare the tape gradient of scalar `fn(*inputs)` with central differences
    on every entry of every input. The error of one input is the largest
    absolute deviation relative to the largest gradient magnitude.
    """
    inputs = [inputs] if isinstance(inputs, Tensor) else list(inputs)
    for x in inputs:
        x.requires_grad = True
        x.grad = None
    fn(*inputs).backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]

    errors = {}
    for idx, (x, grad) in enumerate(zip(inputs, analytic)):
        numeric = np.zeros_like(x.data)
        for i in np.ndindex(x.shape):
            original = x.data[i]
            x.data[i] = original + eps
            upper = fn(*inputs).item()
            x.data[i] = original - eps
            lower = fn(*inputs).item()
            x.data[i] = original
            numeric[i] = (upper - lower) / (2 * eps)
        errors[x.name or f"input{idx}"] = _relative_error(grad, numeric)

    worst = max(errors.values(), default=0.0)
    return GradCheckReport(max_rel_error=worst, passed=worst < tol, tol=tol, errors=errors)
