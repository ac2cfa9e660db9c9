import itertools
from pathlib import Path

import networkx as nx
import numpy as np
import pytest

from modules import generators
from modules.graph import Graph, cluster_stats


@pytest.fixture
def toy():
    return generators.toy_graph()


@pytest.fixture
def barbell() -> Graph:
    return generators.barbell(5)


@pytest.fixture
def k4() -> Graph:
    return generators.complete(4)


@pytest.fixture
def triangle() -> Graph:
    return generators.complete(3)


@pytest.fixture
def karate() -> Graph:
    return Graph.from_networkx(nx.karate_club_graph())


@pytest.fixture
def write_edges(tmp_path: Path):
    """Write edge-list lines to a file and return its path."""

    def write(lines: list[str], name: str = "graph.txt") -> Path:
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return write


def brute_force_min_quotient(graph: Graph, members: np.ndarray) -> float:
    """Smallest ``c_S / vol(S)`` over nonempty ``S`` inside ``members`` with positive volume."""
    best = np.inf
    members = [int(u) for u in members]
    for size in range(1, len(members) + 1):
        for subset in itertools.combinations(members, size):
            stats = cluster_stats(graph, subset)
            if stats.vol_s > 0:
                best = min(best, stats.c_s / stats.vol_s)
    return best


def exact_ppr(graph: Graph, seed: int, alpha: float) -> np.ndarray:
    """Dense solve of ``p = alpha s + (1 - alpha) p W`` for the lazy walk ``W``."""
    n = graph.node_count
    adjacency = graph.adjacency.toarray()
    walk = 0.5 * (np.eye(n) + adjacency / graph.degrees[:, None])
    start = np.zeros(n)
    start[seed] = 1.0
    return alpha * np.linalg.solve((np.eye(n) - (1 - alpha) * walk).T, start)
