"""
Layers
Parameter containers over the functional ops. A Module discovers its
parameters, buffers and sub-modules from its attributes in assignment order.
"""

from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from . import functional as F
from .tensor import Tensor
from ..errors import DimensionError


def parameter(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> Tensor:
    """Xavier-uniform initialised leaf"""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def zeros_parameter(shape: Tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones_parameter(shape: Tuple[int, ...]) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


class Module:
    def __init__(self):
        self.training = True
        self._buffers: Dict[str, np.ndarray] = OrderedDict()

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if name.startswith('_') or name == 'training':
                continue
            if isinstance(value, (Tensor, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield f"{name}.{i}", v

    def named_parameters(self, prefix: str = '') -> Iterator[Tuple[str, Tensor]]:
        for name, value in self._children():
            full = prefix + name
            if isinstance(value, Tensor):
                if value.requires_grad:
                    value.name = full
                    yield full, value
            else:
                yield from value.named_parameters(full + '.')

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = '') -> Iterator[Tuple[str, np.ndarray]]:
        for name, buf in self._buffers.items():
            yield prefix + name, buf
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.named_buffers(prefix + name + '.')

    def modules(self) -> Iterator['Module']:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> 'Module':
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> 'Module':
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> 'OrderedDict[str, np.ndarray]':
        state = OrderedDict((name, p.data.copy()) for name, p in self.named_parameters())
        state.update((name, buf.copy()) for name, buf in self.named_buffers())
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        targets = OrderedDict((name, p.data) for name, p in self.named_parameters())
        targets.update(self.named_buffers())
        missing = [name for name in targets if name not in state]
        if missing:
            raise DimensionError(f"state is missing entries: {missing}")
        for name, target in targets.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != target.shape:
                raise DimensionError(f"{name}: stored shape {value.shape} vs model shape {target.shape}")
            target[...] = value


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.weight = parameter(rng, (in_dim, out_dim), in_dim, out_dim)
        self.bias = zeros_parameter((out_dim,))

    def __call__(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int):
        super().__init__()
        self.gamma = ones_parameter((dim,))
        self.beta = zeros_parameter((dim,))

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta)


class BatchNorm(Module):
    def __init__(self, dim: int, momentum: float = 0.1):
        super().__init__()
        self.gamma = ones_parameter((dim,))
        self.beta = zeros_parameter((dim,))
        self.momentum = momentum
        self._buffers['running_mean'] = np.zeros(dim)
        self._buffers['running_var'] = np.ones(dim)

    def __call__(self, x: Tensor) -> Tensor:
        return F.batch_norm(x, self.gamma, self.beta, self._buffers['running_mean'],
                            self._buffers['running_var'], self.training, self.momentum)


class GRUCell(Module):
    def __init__(self, in_dim: int, hidden_dim: int, rng: np.random.Generator):
        super().__init__()
        self.w_ih = parameter(rng, (in_dim, 3 * hidden_dim), in_dim, hidden_dim)
        self.w_hh = parameter(rng, (hidden_dim, 3 * hidden_dim), hidden_dim, hidden_dim)
        self.b_ih = zeros_parameter((3 * hidden_dim,))
        self.b_hh = zeros_parameter((3 * hidden_dim,))

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        return F.gru_cell(x, h, self.w_ih, self.w_hh, self.b_ih, self.b_hh)


class MultiHeadAttention(Module):
    """
    Multi-head attention over (..., L, d) inputs. Returns the attended values
    and the attention weights averaged over heads; the module keeps no
    per-call state, so eval-mode calls never write to it.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % heads:
            raise DimensionError(f"hidden size {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.query = Linear(dim, dim, rng)
        self.key = Linear(dim, dim, rng)
        self.value = Linear(dim, dim, rng)
        self.out = Linear(dim, dim, rng)

    def __call__(self, query: Tensor, key: Tensor, value: Tensor,
                 mask: Optional[np.ndarray] = None) -> Tuple[Tensor, np.ndarray]:
        q = F.split_heads(self.query(query), self.heads)
        k = F.split_heads(self.key(key), self.heads)
        v = F.split_heads(self.value(value), self.heads)
        attended, weights = F.scaled_dot_product(q, k, v, mask)
        return self.out(F.merge_heads(attended)), weights.data.mean(axis=-3)
