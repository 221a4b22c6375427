"""
Composite operations built from the tensor primitives: affine maps,
normalisation layers, the GRU cell and scaled dot-product attention
"""

import math
from typing import Optional, Tuple

import numpy as np

from .tensor import (Tensor, broadcast_to, matmul, mean, mul, power, relu,
                     sigmoid, slice_, softmax, square, sub, tanh, masked_fill, transpose)
from ..errors import DimensionError

MASK_VALUE = -1e9


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight)
    if bias is not None:
        out = out + broadcast_to(bias, out.shape)
    return out


def _rowwise(stat: Tensor, shape) -> Tensor:
    return broadcast_to(stat, shape)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift per feature"""
    if gamma.shape != (x.shape[-1],):
        raise DimensionError(f"layer_norm: gamma shape {gamma.shape} vs features {x.shape[-1]}")
    centred = sub(x, _rowwise(mean(x, axis=-1, keepdims=True), x.shape))
    var = mean(square(centred), axis=-1, keepdims=True)
    normed = mul(centred, _rowwise(power(var + eps, -0.5), x.shape))
    return mul(normed, broadcast_to(gamma, x.shape)) + broadcast_to(beta, x.shape)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """
    Normalise (batch, features) over the batch axis. In training mode batch
    statistics are used and the running buffers are updated in place; in eval
    mode, and for single-row batches, the frozen running statistics are used.
    """
    if x.ndim != 2 or x.shape[1] != gamma.shape[0]:
        raise DimensionError(f"batch_norm: expected (batch, {gamma.shape[0]}), got {x.shape}")
    batch = x.shape[0]
    if training and batch > 1:
        mu = mean(x, axis=0, keepdims=True)
        centred = sub(x, broadcast_to(mu, x.shape))
        var = mean(square(centred), axis=0, keepdims=True)
        normed = mul(centred, broadcast_to(power(var + eps, -0.5), x.shape))
        unbiased = var.data.reshape(-1) * batch / (batch - 1)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.data.reshape(-1)
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        shift = Tensor(np.broadcast_to(running_mean, x.shape))
        inv_std = Tensor(np.broadcast_to(1.0 / np.sqrt(running_var + eps), x.shape))
        normed = mul(sub(x, shift), inv_std)
    return mul(normed, broadcast_to(gamma, x.shape)) + broadcast_to(beta, x.shape)


def gru_cell(x: Tensor, h: Tensor, w_ih: Tensor, w_hh: Tensor, b_ih: Tensor, b_hh: Tensor) -> Tensor:
    """
    Gated recurrent update for a batch of rows. Gate blocks are laid out
    [reset | update | candidate] along the weight columns.
    """
    d = h.shape[-1]
    if w_ih.shape[1] != 3 * d or w_hh.shape != (d, 3 * d):
        raise DimensionError(f"gru_cell: weights {w_ih.shape}, {w_hh.shape} do not fit hidden size {d}")
    gi = linear(x, w_ih, b_ih)
    gh = linear(h, w_hh, b_hh)
    reset = sigmoid(slice_(gi, (slice(None), slice(0, d))) + slice_(gh, (slice(None), slice(0, d))))
    update = sigmoid(slice_(gi, (slice(None), slice(d, 2 * d))) + slice_(gh, (slice(None), slice(d, 2 * d))))
    candidate = tanh(slice_(gi, (slice(None), slice(2 * d, 3 * d)))
                     + mul(reset, slice_(gh, (slice(None), slice(2 * d, 3 * d)))))
    return mul(1.0 - update, candidate) + mul(update, h)


def causal_mask(length: int) -> np.ndarray:
    """True above the diagonal: step i may only attend to steps <= i"""
    return np.triu(np.ones((length, length), dtype=bool), k=1)


def scaled_dot_product(q: Tensor, k: Tensor, v: Tensor,
                       mask: Optional[np.ndarray] = None) -> Tuple[Tensor, Tensor]:
    """
    q, k: (..., Lq, dk) and (..., Lk, dk); v: (..., Lk, dv). `mask` is True
    where attention is forbidden and broadcasts over the leading axes.
    """
    scores = matmul(q, transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)))
    scores = scores * (1.0 / math.sqrt(q.shape[-1]))
    if mask is not None:
        scores = masked_fill(scores, np.broadcast_to(mask, scores.shape), MASK_VALUE)
    weights = softmax(scores, axis=-1)
    return matmul(weights, v), weights


def split_heads(x: Tensor, heads: int) -> Tensor:
    """(..., L, d) -> (..., heads, L, d / heads)"""
    *lead, length, d = x.shape
    if d % heads:
        raise DimensionError(f"hidden size {d} is not divisible by {heads} heads")
    lead = tuple(lead)
    x = x.reshape(lead + (length, heads, d // heads))
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    return transpose(x, axes)


def merge_heads(x: Tensor) -> Tensor:
    """(..., heads, L, dh) -> (..., L, heads * dh)"""
    *lead, heads, length, dh = x.shape
    lead = tuple(lead)
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    return transpose(x, axes).reshape(lead + (length, heads * dh))


def squared_relu_gap(target: Tensor, predicted: Tensor) -> Tensor:
    """||ReLU(target - predicted)||^2 summed over every entry"""
    if target.shape != predicted.shape:
        raise DimensionError(f"shape mismatch {target.shape} vs {predicted.shape}")
    return square(relu(sub(target, predicted))).sum()
