"""
Migration Graph
Directed host graph of the migrations a scheduling decision implies
"""

from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ..errors import DimensionError


class MigrationGraph:
    """
    One node per host, carrying its feature vector; an edge i -> j when some
    task currently on host i is sent to host j != i. Edge attribute `tasks`
    counts the migrating tasks.
    """

    def __init__(self, m: int):
        self.m = m
        self.graph = nx.DiGraph()
        self.graph.add_nodes_from(range(m))

    def add_migration(self, source: int, target: int) -> None:
        if self.graph.has_edge(source, target):
            self.graph[source][target]['tasks'] += 1
        else:
            self.graph.add_edge(source, target, tasks=1)

    def set_features(self, features: np.ndarray) -> None:
        if features.shape[0] != self.m:
            raise DimensionError(f"{features.shape[0]} feature rows for {self.m} hosts")
        for host in range(self.m):
            self.graph.nodes[host]['features'] = features[host]

    def edges(self) -> List[Tuple[int, int]]:
        return sorted(self.graph.edges())

    def in_neighbors(self, host: int) -> List[int]:
        return sorted(self.graph.predecessors(host))

    def in_adjacency(self) -> np.ndarray:
        """A[i, j] = 1 iff j is a one-step in-neighbour of i"""
        adjacency = nx.to_numpy_array(self.graph, nodelist=range(self.m), weight=None)
        return adjacency.T.copy()

    def relabel(self, permutation: Sequence[int]) -> 'MigrationGraph':
        mapped = MigrationGraph(self.m)
        mapped.graph = nx.relabel_nodes(self.graph, {old: int(new) for old, new in enumerate(permutation)})
        return mapped


def decision_targets(schedule: np.ndarray) -> np.ndarray:
    """Target host per row; for relaxed rows the argmax (lowest index on ties)"""
    schedule = np.asarray(schedule)
    if schedule.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return schedule.argmax(axis=1)


def build_migration_graph(schedule: np.ndarray, placement: Sequence[int],
                          host_features: Optional[np.ndarray] = None) -> MigrationGraph:
    schedule = np.asarray(schedule)
    placement = np.asarray(placement, dtype=np.int64)
    if schedule.ndim != 2 or schedule.shape[0] != placement.shape[0]:
        raise DimensionError(f"schedule with {schedule.shape[0] if schedule.ndim else 0} rows "
                             f"for a placement of {placement.shape[0]} tasks")
    graph = MigrationGraph(schedule.shape[1])
    for source, target in zip(placement, decision_targets(schedule)):
        if source >= 0 and source != target:
            graph.add_migration(int(source), int(target))
    if host_features is not None:
        graph.set_features(np.asarray(host_features))
    return graph
