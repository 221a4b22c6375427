"""
Tensor and Tape
Dense float64 arrays that record the primitive applied to them, and a tape that
replays those records backwards to produce gradients for every marked leaf
"""

from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from ..errors import DimensionError

Number = Union[int, float]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """
    n-dimensional row-major array of float64 values. A tensor produced by a
    primitive whose inputs require gradients keeps links to those inputs and the
    vector-Jacobian product of the primitive.
    """

    __slots__ = ('data', 'grad', 'requires_grad', 'name', 'op', '_parents', '_backward')

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64, copy=True) if not isinstance(data, np.ndarray) \
            else data.astype(np.float64, copy=False)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.op = 'leaf'
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[BackwardFn] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> List['Tensor']:
        return backward(self)

    def __repr__(self):
        label = f", name={self.name}" if self.name else ''
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad}{label})"

    # operator sugar over the primitives below
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else shift(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else shift(self, -other)

    def __rsub__(self, other):
        return shift(neg(self), other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return scale(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def _record(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.op = op
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


class Tape:
    """
    Ordered record of the primitive applications that produced `output`, parents
    before children. Built on demand from the parent links, so separate outputs
    never share a tape.
    """

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes: List[Tensor] = []
        seen = set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

    def __len__(self):
        return len(self.nodes)

    def leaves(self) -> List[Tensor]:
        return [node for node in self.nodes if node.is_leaf]

    def backward(self) -> List[Tensor]:
        """
        Reverse sweep: every recorded node is visited exactly once, after all of
        its consumers. Leaf gradients accumulate into `.grad`.
        """
        output = self.output
        if output.size != 1:
            raise DimensionError(f"backward needs a scalar output, got shape {output.shape}")
        pending: Dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
        leaves = []
        for node in reversed(self.nodes):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node.is_leaf:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                leaves.append(node)
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad
        return leaves


def backward(output: Tensor) -> List[Tensor]:
    """Populate `.grad` on every requires_grad leaf reachable from a scalar output"""
    return Tape(output).backward()


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# elementwise arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape('add', a, b)
    return _record(a.data + b.data, (a, b), lambda g: (g, g), 'add')


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape('sub', a, b)
    return _record(a.data - b.data, (a, b), lambda g: (g, -g), 'sub')


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape('mul', a, b)
    return _record(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), 'mul')


def neg(a: Tensor) -> Tensor:
    return _record(-a.data, (a,), lambda g: (-g,), 'neg')


def scale(a: Tensor, factor: Number) -> Tensor:
    factor = float(factor)
    return _record(a.data * factor, (a,), lambda g: (g * factor,), 'scale')


def shift(a: Tensor, offset: Number) -> Tensor:
    return _record(a.data + float(offset), (a,), lambda g: (g,), 'shift')


def square(a: Tensor) -> Tensor:
    return _record(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), 'square')


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    out = np.power(a.data, exponent)
    return _record(out, (a,), lambda g: (g * exponent * np.power(a.data, exponent - 1.0),), 'power')


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,), 'exp')


def log(a: Tensor) -> Tensor:
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,), 'log')


# activations

def relu(a: Tensor) -> Tensor:
    # subgradient at 0 is 0
    mask = a.data > 0
    return _record(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), 'relu')


def sigmoid(a: Tensor) -> Tensor:
    out = special.expit(a.data)
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),), 'sigmoid')


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),), 'tanh')


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    out = special.softmax(a.data, axis=axis)

    def backward_fn(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _record(out, (a,), backward_fn, 'softmax')


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise DimensionError(f"masked_fill: mask shape {mask.shape} vs tensor shape {a.shape}")
    out = np.where(mask, float(value), a.data)
    return _record(out, (a,), lambda g: (np.where(mask, 0.0, g),), 'masked_fill')


# linear algebra and structure

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    (..., i, j) @ (j, l) with a shared right operand, or (..., i, j) @ (..., j, l)
    with identical leading dimensions
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: leading dimensions differ {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.ndim == 2:
        raise DimensionError(f"matmul: batched right operand needs a batched left operand, "
                             f"got {a.shape} @ {b.shape}")

    def backward_fn(g):
        grad_a = g @ np.swapaxes(b.data, -1, -2)
        grad_b = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _record(a.data @ b.data, (a, b), backward_fn, 'matmul')


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat: no tensors given")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[d] != tensors[0].shape[d] for d in range(ndim) if d != axis):
            raise DimensionError(f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward_fn(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors)))

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward_fn, 'concat')


def slice_(a: Tensor, index) -> Tensor:
    """Basic or integer-array indexing; gradients scatter back with accumulation"""
    out = a.data[index]

    def backward_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _record(np.array(out, dtype=np.float64), (a,), backward_fn, 'slice')


def take_rows(a: Tensor, rows: Sequence[int]) -> Tensor:
    return slice_(a, np.asarray(rows, dtype=np.int64))


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)
    return _record(out, (a,), lambda g: (g.reshape(a.shape),), 'reshape')


def transpose(a: Tensor, axes: Optional[Tuple[int, ...]] = None) -> Tensor:
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _record(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), 'transpose')


def broadcast_to(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    """Explicit repeat along new leading axes or size-1 axes"""
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise DimensionError(f"broadcast_to: cannot repeat {a.shape} to {tuple(shape)}")
    return _record(out, (a,), lambda g: (_unbroadcast(g, a.shape),), 'broadcast')


# reductions

def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    out = np.sum(a.data, axis=axes, keepdims=keepdims)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(np.asarray(out, dtype=np.float64), (a,), backward_fn, 'sum')


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return scale(sum_(a, axis, keepdims), 1.0 / max(count, 1))


def zeros(shape: Iterable[int]) -> Tensor:
    return Tensor(np.zeros(tuple(shape)))
