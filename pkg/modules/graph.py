from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, TextIO

import numpy as np
import networkx as nx
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from utils.logger import LOGGER
from .errors import (
    DuplicateMemberError,
    EmptyGraphError,
    GraphFormatError,
    InvalidNodeError,
)


@dataclass(frozen=True, eq=False, repr=False)
class Graph:
    """
    Immutable undirected simple graph in compressed sparse row form.

    Node ids are dense ``0..n-1``. ``labels[u]`` keeps the id node ``u`` had in
    the source it was loaded from. Neighbor lists are sorted, symmetric and
    free of self-loops and duplicates.
    """

    indptr: np.ndarray
    indices: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        for array in (self.indptr, self.indices, self.labels):
            array.setflags(write=False)

    def __repr__(self) -> str:
        return f"Graph(n={self.node_count}, m={self.edge_count})"

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[tuple[int, int]] | np.ndarray,
        node_count: Optional[int] = None,
        labels: Optional[Iterable[int]] = None,
    ) -> "Graph":
        """Build a graph from dense-id pairs. Self-loops and duplicates are dropped."""
        pairs = np.asarray(edges if isinstance(edges, np.ndarray) else list(edges), dtype=np.int64).reshape(-1, 2)
        if node_count is None:
            node_count = int(pairs.max()) + 1 if pairs.size else 0
        if pairs.size and (pairs.min() < 0 or pairs.max() >= node_count):
            raise InvalidNodeError(f"edge endpoint outside 0..{node_count - 1}")

        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        low = np.minimum(pairs[:, 0], pairs[:, 1])
        high = np.maximum(pairs[:, 0], pairs[:, 1])
        keys = np.unique(low * max(node_count, 1) + high)
        low, high = np.divmod(keys, max(node_count, 1))

        rows = np.concatenate([low, high])
        cols = np.concatenate([high, low])
        adjacency = sp.csr_matrix(
            (np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(node_count, node_count)
        )
        adjacency.sort_indices()

        node_labels = np.arange(node_count, dtype=np.int64) if labels is None else np.asarray(list(labels), dtype=np.int64)
        if node_labels.size != node_count:
            raise InvalidNodeError(f"expected {node_count} labels, got {node_labels.size}")
        return cls(
            indptr=adjacency.indptr.astype(np.int64),
            indices=adjacency.indices.astype(np.int64),
            labels=node_labels,
        )

    @classmethod
    def from_networkx(cls, graph: nx.Graph) -> "Graph":
        nodes = list(graph.nodes())
        if all(isinstance(node, (int, np.integer)) for node in nodes):
            nodes = sorted(nodes)
            labels = nodes
        else:
            labels = range(len(nodes))
        position = {node: index for index, node in enumerate(nodes)}
        edges = [(position[u], position[v]) for u, v in graph.edges()]
        return cls.from_edges(edges, node_count=len(nodes), labels=labels)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.node_count))
        graph.add_edges_from(map(tuple, self.edge_array.tolist()))
        return graph

    @property
    def node_count(self) -> int:
        return len(self.indptr) - 1

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    @property
    def total_volume(self) -> int:
        return len(self.indices)

    @cached_property
    def degrees(self) -> np.ndarray:
        degrees = np.diff(self.indptr)
        degrees.setflags(write=False)
        return degrees

    def degree(self, node: int) -> int:
        return int(self.indptr[node + 1] - self.indptr[node])

    def neighbors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.node_count
        return sp.csr_matrix(
            (np.ones(len(self.indices), dtype=np.float64), self.indices, self.indptr), shape=(n, n)
        )

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        return sp.csr_matrix(sp.diags(self.degrees.astype(np.float64)) - self.adjacency)

    @cached_property
    def adjacency_lists(self) -> list[list[int]]:
        return [self.neighbors(u).tolist() for u in range(self.node_count)]

    @cached_property
    def edge_array(self) -> np.ndarray:
        """Canonical ``(u, v)`` pairs with ``u < v`` in lexicographic order; row index is the edge id."""
        rows = np.repeat(np.arange(self.node_count, dtype=np.int64), self.degrees)
        forward = rows < self.indices
        edges = np.column_stack((rows[forward], self.indices[forward]))
        edges.setflags(write=False)
        return edges

    @cached_property
    def _edge_keys(self) -> np.ndarray:
        return self.edge_array[:, 0] * self.node_count + self.edge_array[:, 1]

    def edge_id(self, u: int, v: int) -> int:
        low, high = (u, v) if u < v else (v, u)
        key = low * self.node_count + high
        position = int(np.searchsorted(self._edge_keys, key))
        if position >= self.edge_count or self._edge_keys[position] != key:
            raise InvalidNodeError(f"({u}, {v}) is not an edge")
        return position

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        position = int(np.searchsorted(row, v))
        return position < len(row) and row[position] == v

    @cached_property
    def label_index(self) -> dict[int, int]:
        return {int(label): node for node, label in enumerate(self.labels.tolist())}


@dataclass(frozen=True, eq=False, repr=False)
class Cluster:
    """A node subset with its cached statistics. ``vol_s == 2 * m_s + c_s`` always."""

    members: np.ndarray
    n_s: int
    m_s: int
    c_s: int
    vol_s: int

    def __post_init__(self) -> None:
        self.members.setflags(write=False)

    def __len__(self) -> int:
        return self.n_s

    def __repr__(self) -> str:
        return f"Cluster(n_s={self.n_s}, m_s={self.m_s}, c_s={self.c_s}, vol_s={self.vol_s})"

    @property
    def key(self) -> bytes:
        return self.members.tobytes()

    def mask(self, node_count: int) -> np.ndarray:
        mask = np.zeros(node_count, dtype=bool)
        mask[self.members] = True
        return mask


def load_edge_list(
    source: str | Path | TextIO | Iterable[str], keep_largest_component: bool = False
) -> Graph:
    """
    Read a whitespace-separated edge list.

    Lines starting with ``#`` are comments. Self-loops are dropped, reversed and
    repeated pairs merged, and node ids remapped densely in ascending order of
    the original ids. Columns after the first two are ignored.

    Args:
        source: A path or an iterable of text lines.
        keep_largest_component: Retain only the largest connected component.

    Returns:
        Graph: The loaded graph.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as handle:
            return load_edge_list(handle, keep_largest_component=keep_largest_component)

    pairs: list[tuple[int, int]] = []
    warned_extra = False
    for line_number, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise GraphFormatError(f"expected two node ids, got {line!r}", line_number)
        if len(tokens) > 2 and not warned_extra:
            LOGGER.warning(f"Ignoring extra columns from line {line_number} on (weights are not supported)")
            warned_extra = True
        try:
            pairs.append((int(tokens[0]), int(tokens[1])))
        except ValueError:
            raise GraphFormatError(f"node ids must be integers, got {line!r}", line_number) from None

    graph = _graph_from_label_pairs(pairs)
    LOGGER.debug(f"Loaded {graph} from {len(pairs)} edge lines")
    if keep_largest_component:
        graph = largest_connected_component(graph)
    return graph


def _graph_from_label_pairs(pairs: list[tuple[int, int]]) -> Graph:
    array = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    array = array[array[:, 0] != array[:, 1]]
    if array.size == 0:
        raise EmptyGraphError("graph has no edges after dropping comments and self-loops")
    labels, inverse = np.unique(array.ravel(), return_inverse=True)
    return Graph.from_edges(inverse.reshape(-1, 2), node_count=len(labels), labels=labels)


def save_edge_list(graph: Graph, sink: str | Path | TextIO) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as handle:
            save_edge_list(graph, handle)
            return

    sink.write(f"# nodes: {graph.node_count} edges: {graph.edge_count}\n")
    labels = graph.labels
    for u, v in graph.edge_array.tolist():
        sink.write(f"{labels[u]} {labels[v]}\n")


def validate_members(graph: Graph, members: Iterable[int] | np.ndarray) -> np.ndarray:
    nodes = np.asarray(members if isinstance(members, np.ndarray) else list(members), dtype=np.int64).ravel()
    if nodes.size and (nodes.min() < 0 or nodes.max() >= graph.node_count):
        raise InvalidNodeError(f"member id outside 0..{graph.node_count - 1}")
    nodes = np.sort(nodes)
    if nodes.size > 1 and np.any(nodes[1:] == nodes[:-1]):
        duplicates = np.unique(nodes[1:][nodes[1:] == nodes[:-1]])
        raise DuplicateMemberError(f"duplicate member ids {duplicates.tolist()}")
    return nodes


def inside_degrees(graph: Graph, nodes: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per member of ``nodes``, the number of neighbors inside ``mask``."""
    if nodes.size == 0:
        return np.zeros(0, dtype=np.int64)
    counts = graph.adjacency[nodes] @ mask.astype(np.float64)
    return np.rint(counts).astype(np.int64)


def cluster_stats(graph: Graph, members: Iterable[int] | np.ndarray) -> Cluster:
    nodes = validate_members(graph, members)
    mask = np.zeros(graph.node_count, dtype=bool)
    mask[nodes] = True
    internal_twice = int(inside_degrees(graph, nodes, mask).sum())
    volume = int(graph.degrees[nodes].sum())
    return Cluster(
        members=nodes,
        n_s=int(nodes.size),
        m_s=internal_twice // 2,
        c_s=volume - internal_twice,
        vol_s=volume,
    )


def as_members(graph: Graph, cluster: Cluster | Iterable[int] | np.ndarray) -> np.ndarray:
    if isinstance(cluster, Cluster):
        if cluster.n_s and int(cluster.members[-1]) >= graph.node_count:
            raise InvalidNodeError(f"member id outside 0..{graph.node_count - 1}")
        return cluster.members
    return validate_members(graph, cluster)


def induced_subgraph(graph: Graph, cluster: Cluster | Iterable[int] | np.ndarray) -> Graph:
    nodes = as_members(graph, cluster)
    sub = sp.csr_matrix(graph.adjacency[nodes][:, nodes])
    sub.sort_indices()
    return Graph(
        indptr=sub.indptr.astype(np.int64),
        indices=sub.indices.astype(np.int64),
        labels=graph.labels[nodes].copy(),
    )


def components(graph: Graph, members: Optional[Cluster | Iterable[int] | np.ndarray] = None) -> list[np.ndarray]:
    """Connected components (of the subgraph induced by ``members`` if given), ordered by smallest node."""
    nodes = np.arange(graph.node_count, dtype=np.int64) if members is None else as_members(graph, members)
    if nodes.size == 0:
        return []
    sub = graph.adjacency if members is None else graph.adjacency[nodes][:, nodes]
    _, labels = connected_components(sub, directed=False)
    parts = [nodes[labels == label] for label in range(int(labels.max()) + 1)]
    return sorted(parts, key=lambda part: int(part[0]))


def component_count(graph: Graph) -> int:
    if graph.node_count == 0:
        return 0
    count, _ = connected_components(graph.adjacency, directed=False)
    return int(count)


def is_connected_subset(graph: Graph, members: Cluster | Iterable[int] | np.ndarray) -> bool:
    nodes = as_members(graph, members)
    if nodes.size <= 1:
        return nodes.size == 1
    count, _ = connected_components(graph.adjacency[nodes][:, nodes], directed=False)
    return count == 1


def largest_connected_component(graph: Graph) -> Graph:
    """The component with most nodes; ties go to the one holding the smallest original id."""
    parts = components(graph)
    if len(parts) <= 1:
        return graph
    best = min(parts, key=lambda part: (-part.size, int(graph.labels[part].min())))
    LOGGER.info(f"Keeping largest component: {best.size} of {graph.node_count} nodes in {len(parts)} components")
    return induced_subgraph(graph, best)


def read_cluster_file(graph: Graph, source: str | Path | TextIO | Iterable[str]) -> Cluster:
    """Read original node ids (whitespace separated, ``#`` comments) into a cluster on ``graph``."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as handle:
            return read_cluster_file(graph, handle)

    index = graph.label_index
    members: list[int] = []
    for line_number, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        for token in line.split():
            try:
                label = int(token)
            except ValueError:
                raise GraphFormatError(f"node ids must be integers, got {token!r}", line_number) from None
            if label not in index:
                raise InvalidNodeError(f"line {line_number}: unknown node id {label}")
            members.append(index[label])
    return cluster_stats(graph, members)


def write_cluster_file(graph: Graph, cluster: Cluster, sink: str | Path | TextIO) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as handle:
            write_cluster_file(graph, cluster, handle)
            return
    for label in graph.labels[cluster.members].tolist():
        sink.write(f"{label}\n")


def degree_summary(graph: Graph) -> dict[str, float]:
    degrees = graph.degrees
    if degrees.size == 0:
        return {"min_degree": 0, "max_degree": 0, "mean_degree": 0.0, "median_degree": 0.0}
    return {
        "min_degree": int(degrees.min()),
        "max_degree": int(degrees.max()),
        "mean_degree": float(degrees.mean()),
        "median_degree": float(np.median(degrees)),
    }
