"""
Sensor-network topology and the spectral quantities the consensus filters depend on.
"""

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from core.errors import GraphError, NoEdges, StepSizeTooLarge
from core.log import LOG


Edge = Tuple[int, int]


@dataclass(frozen=True)
class Graph:
    """
    Undirected weighted graph on nodes 0..n-1.

    Edges are stored canonically as (min, max) pairs sorted lexicographically, so two graphs built
    from the same edge set in any order compare equal.
    """
    n: int
    edges: Tuple[Edge, ...] = ()
    weights: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"a graph needs at least one node, got n={self.n}")
        weights = list(self.weights) if self.weights else [1.0] * len(self.edges)
        if len(weights) != len(self.edges):
            raise GraphError(f"{len(self.edges)} edges but {len(weights)} weights")

        canonical = {}
        for (i, j), w in zip(self.edges, weights):
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={self.n}")
            if w <= 0:
                raise GraphError(f"edge ({i}, {j}) has non-positive weight {w}")
            key = (min(i, j), max(i, j))
            if key in canonical:
                raise GraphError(f"duplicate edge {key}")
            canonical[key] = float(w)

        ordered = sorted(canonical)
        object.__setattr__(self, "edges", tuple(ordered))
        object.__setattr__(self, "weights", tuple(canonical[e] for e in ordered))

    def neighbors(self, node: int) -> List[int]:
        return sorted([j for i, j in self.edges if i == node] + [i for i, j in self.edges if j == node])

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_weighted_edges_from((i, j, w) for (i, j), w in zip(self.edges, self.weights))
        return graph

    @classmethod
    def from_networkx(cls, graph: nx.Graph) -> "Graph":
        edges = [(int(i), int(j)) for i, j in graph.edges()]
        weights = [float(graph.edges[e].get("weight", 1.0)) for e in graph.edges()]
        return cls(n=graph.number_of_nodes(), edges=tuple(edges), weights=tuple(weights))

    @classmethod
    def path(cls, n: int) -> "Graph":
        return cls(n=n, edges=tuple((i, i + 1) for i in range(n - 1)))

    @classmethod
    def star(cls, n: int) -> "Graph":
        return cls(n=n, edges=tuple((0, i) for i in range(1, n)))

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls(n=n, edges=tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def derive_matrices(g: Graph) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Adjacency, degree and Laplacian matrices of a graph.

    :param g: The graph.
    :return: (adjacency, degree, laplacian) as dense n×n arrays, laplacian = degree - adjacency.
    """
    adjacency = np.zeros((g.n, g.n))
    for (i, j), w in zip(g.edges, g.weights):
        adjacency[i, j] = w
        adjacency[j, i] = w
    degree = np.diag(adjacency.sum(axis=1))
    return adjacency, degree, degree - adjacency


def is_connected(g: Graph) -> bool:
    return nx.is_connected(g.to_networkx())


def random_connected_graph(n: int, edge_probability: float, seed: int) -> Graph:
    """
    Erdős–Rényi graph that is repaired into a connected one.

    While the sample is disconnected, two distinct components are picked at random and joined through a
    random pair of their nodes. All randomness flows from ``seed``.

    :param n: Number of nodes.
    :param edge_probability: Erdős–Rényi edge probability in (0, 1].
    :param seed: Seed for both the sampler and the repair step.
    :return: A connected graph.
    """
    if n < 1:
        raise GraphError(f"a graph needs at least one node, got n={n}")
    if not 0.0 < edge_probability <= 1.0:
        raise GraphError(f"edge probability must lie in (0, 1], got {edge_probability}")

    graph = nx.gnp_random_graph(n, edge_probability, seed=seed)
    rng = np.random.default_rng(seed)
    repaired = 0
    while not nx.is_connected(graph):
        components = [sorted(c) for c in sorted(nx.connected_components(graph), key=min)]
        first, second = rng.choice(len(components), size=2, replace=False)
        u = int(rng.choice(components[first]))
        v = int(rng.choice(components[second]))
        graph.add_edge(u, v)
        repaired += 1
    if repaired:
        LOG.debug(f"Random graph n={n} p={edge_probability} seed={seed} needed {repaired} repair edges")
    return Graph.from_networkx(graph)


def max_degree(g: Graph) -> float:
    _, degree, _ = derive_matrices(g)
    return float(np.max(np.diag(degree)))


def max_step_size(g: Graph) -> float:
    """
    Upper bound of the consensus step size, 0 < eps < 1 / max_i L[i,i].

    :raises NoEdges: If every degree is zero.
    """
    d_max = max_degree(g)
    if d_max <= 0.0:
        raise NoEdges("step-size bound is undefined for a graph without edges")
    return 1.0 / d_max


def filter_step_bound(g: Graph) -> float:
    """
    Step size below which the band-pass S-block I - eps(L + D + I) is Schur stable.

    Gershgorin bounds the spectrum of L + D + I by 3 d_max + 1, so eps < 2 / (3 d_max + 1) keeps every
    eigenvalue of the block above -1. For graphs without edges the bound is 1.
    """
    d_max = max_degree(g)
    return 2.0 / (3.0 * d_max + 1.0) if d_max > 0 else 1.0


def default_step_size(g: Graph, safety: float = 0.9) -> float:
    if not g.edges:
        return safety
    return safety * min(max_step_size(g), filter_step_bound(g))


def check_step_size(g: Graph, eps: float) -> None:
    """
    :raises StepSizeTooLarge: If eps is outside the open interval (0, max_step_size). Graphs without edges
        accept 0 < eps <= 1.
    """
    if not g.edges:
        if not 0.0 < eps <= 1.0:
            raise StepSizeTooLarge(eps, 1.0)
        return
    bound = max_step_size(g)
    if not 0.0 < eps < bound:
        raise StepSizeTooLarge(eps, bound)


def graph_from_edge_list(n: int, edges: Iterable[Sequence[int]], weights: Optional[Sequence[float]] = None) -> Graph:
    return Graph(n=n, edges=tuple((int(e[0]), int(e[1])) for e in edges), weights=tuple(weights or ()))
