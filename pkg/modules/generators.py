"""Small synthetic graphs used by the tests, the acceptance runs and the CLI ``--graph`` shortcuts."""

from dataclasses import dataclass

import networkx as nx
import numpy as np

from .graph import Graph


def complete(n: int) -> Graph:
    return Graph.from_networkx(nx.complete_graph(n))


def path(n: int) -> Graph:
    return Graph.from_networkx(nx.path_graph(n))


def cycle(n: int) -> Graph:
    return Graph.from_networkx(nx.cycle_graph(n))


def barbell(k: int = 5) -> Graph:
    """Two ``K_k`` joined by one edge between node ``k - 1`` and node ``k``."""
    return Graph.from_networkx(nx.barbell_graph(k, 0))


@dataclass(frozen=True)
class ToyGraph:
    graph: Graph
    # A: a well-knit 4-clique in the middle, B: the best 4-node set
    set_a: tuple[int, ...]
    set_b: tuple[int, ...]


def toy_graph() -> ToyGraph:
    """
    Eleven nodes, sixteen edges.

    ``B = {0, 1, 2, 3}`` (K4 minus the edge 2-3) hangs off a clique
    ``A = {4, 5, 6, 7}`` by the edge 3-4, and a triangle ``{8, 9, 10}``
    hangs off ``A`` by 7-8. Conductance of ``A`` is 2/14, of ``B`` is 1/11,
    and no 4-node set does better than ``B``.
    """
    edges = [
        (0, 1), (0, 2), (0, 3), (1, 2), (1, 3),
        (3, 4),
        (4, 5), (4, 6), (4, 7), (5, 6), (5, 7), (6, 7),
        (7, 8),
        (8, 9), (8, 10), (9, 10),
    ]
    return ToyGraph(graph=Graph.from_edges(edges, node_count=11), set_a=(4, 5, 6, 7), set_b=(0, 1, 2, 3))


def grid(rows: int, cols: int) -> Graph:
    return Graph.from_networkx(nx.convert_node_labels_to_integers(nx.grid_2d_graph(rows, cols), ordering="sorted"))


def erdos_renyi(n: int, p: float, seed: int = 0) -> Graph:
    return Graph.from_networkx(nx.gnp_random_graph(n, p, seed=seed))


def planted_two_community(n: int, p_in: float, p_out: float, seed: int = 0) -> Graph:
    """Two halves, dense inside (``p_in``) and sparse across (``p_out``)."""
    half = n // 2
    return Graph.from_networkx(nx.random_partition_graph([half, n - half], p_in, p_out, seed=seed))


def core_periphery(
    clique_count: int = 30,
    clique_size: int = 10,
    core_size: int = 200,
    core_degree: int = 6,
    seed: int = 0,
) -> Graph:
    """
    Cliques hanging off an expander-like core.

    The core is a random ``core_degree``-regular graph on nodes
    ``0..core_size-1``; each clique is attached by a single edge from its
    first node to a distinct random core node. Defaults give 500 nodes.
    """
    if clique_count > core_size:
        raise ValueError("each clique needs its own core attachment node")
    rng = np.random.default_rng(seed)
    graph = nx.random_regular_graph(core_degree, core_size, seed=seed)
    anchors = rng.choice(core_size, size=clique_count, replace=False)
    offset = core_size
    for anchor in anchors.tolist():
        members = range(offset, offset + clique_size)
        graph.add_edges_from((u, v) for u in members for v in members if u < v)
        graph.add_edge(anchor, offset)
        offset += clique_size
    return Graph.from_networkx(graph)


def two_triangles_to_hub() -> Graph:
    """
    A ``K6`` on ``0..5`` with triangles ``{6, 7, 8}`` and ``{9, 10, 11}``
    each tied to node 0 by one edge. The two triangles together form a
    disconnected half-volume set that no strict subset improves on.
    """
    graph = nx.complete_graph(6)
    graph.add_edges_from([(6, 7), (6, 8), (7, 8), (9, 10), (9, 11), (10, 11), (0, 6), (0, 9)])
    return Graph.from_networkx(graph)
