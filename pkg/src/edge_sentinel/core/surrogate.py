"""
Surrogate Model
Composite network mapping a normalised state window W and a (relaxed)
scheduling decision S to a predicted next window and a prototype embedding.

Evaluation order: state-window self-attention and the migration-graph
encoder first, then the decision pre-encoding, the decision-conditioned
state encoding, the state-conditioned decision encoding, and the two heads.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .migration_graph import build_migration_graph, decision_targets
from ..autodiff import functional as F
from ..autodiff.nn import BatchNorm, GRUCell, LayerNorm, Linear, Module, MultiHeadAttention, parameter
from ..autodiff.tensor import (Tape, Tensor, broadcast_to, concat, matmul, relu, sigmoid, softmax,
                               take_rows, tanh)
from ..errors import DimensionError
from ..utils.config import ModelConfig
from ..utils.seeding import derive_rng

logger = logging.getLogger(__name__)


@dataclass
class SurrogateOutput:
    window: Tensor
    prototype: Tensor
    attention: Dict[str, np.ndarray] = field(default_factory=dict)


class GraphRound(Module):
    """One propagation step x_i = sum over in-neighbours j of W e_j"""

    def __init__(self, dim: int, rng: np.random.Generator):
        super().__init__()
        self.weight = parameter(rng, (dim, dim), dim, dim)

    def __call__(self, adjacency: Tensor, embeddings: Tensor) -> Tensor:
        return matmul(adjacency, matmul(embeddings, self.weight))


class SurrogateModel(Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        m, n, k, d = config.m, config.n, config.k, config.hidden_dim
        rng = derive_rng(config.seed, 'model')
        # state side
        self.window_proj = Linear(n, d, rng)
        self.window_attention = MultiHeadAttention(d, config.heads, rng)
        self.window_norm = LayerNorm(d)
        self.graph_input = Linear(n, d, rng)
        self.graph_rounds = [GraphRound(d, rng) for _ in range(config.graph_rounds)]
        self.gru = GRUCell(d, d, rng)
        # decision side
        self.decision_ff = Linear(m, d, rng)
        self.decision_bn = BatchNorm(d)
        self.decision_attention = MultiHeadAttention(d, config.heads, rng)
        self.decision_norm = LayerNorm(d)
        # cross conditioning and heads
        self.state_fusion = Linear(2 * d, d, rng)
        self.step_score = Linear(2 * d, 1, rng)
        self.row_fusion = Linear(2 * d, d, rng)
        self.decoder = Linear(d, n * k, rng)
        self.prototype_head = Linear(d, config.proto_dim, rng)

    # state side

    def encode_window(self, window: np.ndarray) -> Tuple[Tensor, np.ndarray]:
        """E^W_2: per-entity causal self-attention over the k steps, (E, k, d), and its weights"""
        steps = Tensor(np.ascontiguousarray(np.transpose(window, (0, 2, 1))))
        projected = self.window_proj(steps)
        attended, weights = self.window_attention(projected, projected, projected, mask=F.causal_mask(self.config.k))
        return self.window_norm(projected + attended), weights

    def graph_encode(self, adjacency: np.ndarray, host_features: np.ndarray,
                     rounds: Optional[int] = None) -> Tensor:
        """E^H: tanh input embedding refined by GRU updates over in-neighbour sums, (m, d)"""
        rounds = len(self.graph_rounds) if rounds is None else rounds
        embeddings = tanh(self.graph_input(Tensor(host_features)))
        adjacency = Tensor(adjacency)
        for step in self.graph_rounds[:rounds]:
            embeddings = self.gru(step(adjacency, embeddings), embeddings)
        return embeddings

    # decision side

    def pre_encode_decision(self, schedule: Tensor) -> Tensor:
        """E^S = ReLU(BatchNorm(FF(S))), (p, d)"""
        return relu(self.decision_bn(self.decision_ff(schedule)))

    def encode_state(self, encoded_window: Tensor, host_embeddings: Tensor, decision: Optional[Tensor],
                     row_hosts: Sequence[int]):
        """
        E^W: fuse each step with its host embedding, then pool the k steps with
        weights conditioned on the mean decision encoding, (E, d)
        """
        entities, k, d = encoded_window.shape
        hosts = take_rows(host_embeddings, row_hosts).reshape((entities, 1, d))
        fused = relu(self.state_fusion(concat([encoded_window, broadcast_to(hosts, (entities, k, d))], axis=-1)))
        condition = decision.mean(axis=0) if decision is not None else Tensor(np.zeros(d))
        condition = broadcast_to(condition.reshape((1, 1, d)), (entities, k, d))
        scores = self.step_score(concat([encoded_window, condition], axis=-1))
        weights = softmax(scores, axis=1)
        pooled = (broadcast_to(weights, (entities, k, d)) * fused).sum(axis=1)
        return pooled, weights

    def encode_decision(self, decision: Optional[Tensor], state_rows: Tensor) -> Tuple[Tensor, Optional[np.ndarray]]:
        """
        E^S_2: decision rows attend over each other with the task rows of E^W
        as values, then residual, norm, ReLU and a mean over tasks, (d,).
        The attention weights are None without tasks.
        """
        d = self.config.hidden_dim
        if decision is None:
            return Tensor(np.zeros(d)), None
        attended, weights = self.decision_attention(decision, decision, state_rows)
        return relu(self.decision_norm(decision + attended)).mean(axis=0), weights

    # heads

    def decode_state(self, pooled: Tensor, state_encoding: Tensor) -> Tensor:
        """Ŵ = sigmoid(FF(ReLU(FF([E^S_2, E^W_r])))) per entity row, (E, n, k)"""
        entities, d = state_encoding.shape
        merged = concat([broadcast_to(pooled.reshape((1, d)), (entities, d)), state_encoding], axis=-1)
        rows = relu(self.row_fusion(merged))
        return sigmoid(self.decoder(rows)).reshape((entities, self.config.n, self.config.k))

    def prototype(self, pooled: Tensor) -> Tensor:
        return sigmoid(self.prototype_head(pooled.reshape((1, pooled.shape[0])))).reshape((self.config.proto_dim,))

    def forward(self, window: np.ndarray, schedule, placement: Sequence[int]) -> SurrogateOutput:
        """
        window: normalised (m + p, n, k); schedule: (p, m) array or Tensor;
        placement: current host per task, -1 for tasks not yet placed
        """
        cfg = self.config
        schedule = schedule if isinstance(schedule, Tensor) else Tensor(np.asarray(schedule, dtype=np.float64))
        placement = np.asarray(placement, dtype=np.int64)
        window = np.asarray(window, dtype=np.float64)
        p = schedule.shape[0]
        if window.shape != (cfg.m + p, cfg.n, cfg.k):
            raise DimensionError(f"window shape {window.shape}, expected ({cfg.m + p}, {cfg.n}, {cfg.k}) "
                                 f"for m={cfg.m}, p={p}")
        if schedule.ndim != 2 or schedule.shape[1] != cfg.m or placement.shape != (p,):
            raise DimensionError(f"schedule {schedule.shape} / placement {placement.shape} do not fit "
                                 f"m={cfg.m}, p={p}")

        targets = decision_targets(schedule.data)
        graph = build_migration_graph(schedule.data, placement)
        encoded_window, window_weights = self.encode_window(window)
        host_embeddings = self.graph_encode(graph.in_adjacency(), window[:cfg.m, :, -1])

        decision = self.pre_encode_decision(schedule) if p else None
        row_hosts = list(range(cfg.m)) + [int(h) if h >= 0 else int(t) for h, t in zip(placement, targets)]
        state_encoding, step_weights = self.encode_state(encoded_window, host_embeddings, decision, row_hosts)
        task_rows = take_rows(state_encoding, list(range(cfg.m, cfg.m + p))) if p else None
        pooled, decision_weights = self.encode_decision(decision, task_rows)

        attention = {
            'state': window_weights,
            'temporal': step_weights.data[..., 0],
        }
        if p:
            attention['decision'] = decision_weights
        return SurrogateOutput(self.decode_state(pooled, state_encoding), self.prototype(pooled), attention)

    __call__ = forward


def relaxed_schedule(logits: Tensor, temperature: float = 1.0) -> Tensor:
    """Row-softmax of unconstrained logits"""
    return softmax(logits * (1.0 / temperature), axis=-1)


def parameter_report(config: ModelConfig, task_counts: Sequence[int] = (1, 10, 100)) -> Dict[str, object]:
    """
    Parameter count, its relative growth per added host, and the number of
    parameter values a forward pass touches for several task counts
    """
    model = SurrogateModel(config).eval()
    base = model.num_parameters()
    plus_host = SurrogateModel(replace(config, m=config.m + 1)).num_parameters()
    touched = {}
    for p in task_counts:
        window = np.zeros((config.m + p, config.n, config.k))
        schedule = np.full((p, config.m), 1.0 / config.m)
        out = model.forward(window, schedule, np.full(p, -1))
        leaves = Tape(out.window.sum() + out.prototype.sum()).leaves()
        touched[int(p)] = int(sum(leaf.size for leaf in leaves))
    return {
        'm': config.m,
        'parameters': base,
        'parameters_plus_one_host': plus_host,
        'host_growth': (plus_host - base) / base,
        'touched_by_p': touched,
        'p_independent': len(set(touched.values())) == 1 and base == next(iter(touched.values())),
    }
