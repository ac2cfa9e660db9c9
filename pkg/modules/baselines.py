import math
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from config import BoundsSettings, DendrogramSettings
from utils.logger import LOGGER
from .errors import GraphFormatError, InvalidNodeError
from .graph import Cluster, Graph, cluster_stats, components, is_connected_subset
from .linalg import fiedler_pair
from .flow import mqi
from .local_spectral import sweep_ordering
from .runner import parallel_map
from .scoring import GeneratorTag, ScoredCluster, ScoreKind, formula


def fiedler_vector(graph: Graph, settings: Optional[BoundsSettings] = None) -> np.ndarray:
    """Unit-norm minimizer of ``x'Lx / x'Dx`` over ``x . d = 0``, first nonzero entry positive."""
    settings = settings or BoundsSettings()
    return fiedler_pair(graph, tolerance=settings.tolerance, dense_limit=settings.dense_limit).vector


def _conductance(graph: Graph, cluster: Cluster) -> float:
    return float(
        formula(
            ScoreKind.CONDUCTANCE,
            n=graph.node_count,
            m=graph.edge_count,
            n_s=cluster.n_s,
            m_s=cluster.m_s,
            c_s=cluster.c_s,
            vol_s=cluster.vol_s,
        )
    )


def global_spectral_sweep(graph: Graph, settings: Optional[BoundsSettings] = None) -> list[ScoredCluster]:
    """
    Sweep both ends of the Fiedler ordering and add a flow-rounded cut.

    Every proper prefix of the descending and the ascending ordering (ties
    by node id) is emitted. The prefix whose volume is closest to half the
    graph is then improved with ``mqi`` on its lighter side; when that result
    is internally disconnected its connected pieces are emitted as well.
    When the rounded cut equals a sweep prefix, that entry carries the
    ``variant="flow"`` tag instead of a duplicate.
    """
    x = fiedler_vector(graph, settings)
    n = graph.node_count
    ids = np.arange(n)
    orderings = {
        "descending": np.lexsort((ids, -x)),
        "ascending": np.lexsort((ids, x)),
    }

    seen: dict[bytes, ScoredCluster] = {}
    emitted: list[ScoredCluster] = []

    def emit(cluster: Cluster, generator: GeneratorTag, connected: bool, params: dict) -> None:
        if cluster.key in seen:
            if params.get("variant") == "flow":
                # the flow rounding kept a sweep prefix; record that on the prefix
                seen[cluster.key].params.update(params)
            return
        candidate = ScoredCluster(cluster=cluster, generator=generator, connected=connected, params=params)
        seen[cluster.key] = candidate
        emitted.append(candidate)

    results = {direction: sweep_ordering(graph, order, max_size=n - 1) for direction, order in orderings.items()}
    for direction, result in results.items():
        for prefix in result.prefixes:
            emit(prefix.cluster, GeneratorTag.GLOBAL_SPECTRAL, prefix.connected,
                 {"variant": "sweep", "order": direction, "k": prefix.k})

    half = graph.total_volume / 2
    balanced = min(results["descending"].prefixes, key=lambda prefix: (abs(prefix.vol_s - half), prefix.k))
    side = balanced.cluster
    if side.vol_s > half:
        side = cluster_stats(graph, np.setdiff1d(np.arange(n), side.members))
    rounded = mqi(graph, side)
    connected = is_connected_subset(graph, rounded)
    emit(rounded, GeneratorTag.GLOBAL_SPECTRAL, connected, {"variant": "flow", "k": balanced.k})
    if not connected:
        for index, piece in enumerate(components(graph, rounded)):
            emit(cluster_stats(graph, piece), GeneratorTag.SPLIT_CHILD, True, {"variant": "flow", "piece": index})

    LOGGER.info(f"global-spectral: {len(emitted)} candidates, flow-rounded cut connected={connected}")
    return emitted


def _edge_neighbors(graph: Graph) -> list[dict[int, int]]:
    neighbors: list[dict[int, int]] = [{} for _ in range(graph.node_count)]
    for eid, (u, v) in enumerate(graph.edge_array.tolist()):
        neighbors[u][v] = eid
        neighbors[v][u] = eid
    return neighbors


def _accumulate(neighbors: list[dict[int, int]], sources: Iterable[int], edge_count: int) -> np.ndarray:
    """Brandes dependency accumulation summed over ``sources`` (each pair counted from both ends)."""
    scores = np.zeros(edge_count, dtype=np.float64)
    for source in sources:
        distance = {source: 0}
        sigma = {source: 1}
        predecessors: dict[int, list[tuple[int, int]]] = {source: []}
        stack: list[int] = []
        queue = deque([source])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w, eid in neighbors[v].items():
                if w not in distance:
                    distance[w] = distance[v] + 1
                    sigma[w] = 0
                    predecessors[w] = []
                    queue.append(w)
                if distance[w] == distance[v] + 1:
                    sigma[w] += sigma[v]
                    predecessors[w].append((v, eid))

        delta = dict.fromkeys(stack, 0.0)
        while stack:
            w = stack.pop()
            for v, eid in predecessors[w]:
                credit = sigma[v] / sigma[w] * (1.0 + delta[w])
                scores[eid] += credit
                delta[v] += credit
    return scores


def _betweenness(neighbors: list[dict[int, int]], sources: list[int], edge_count: int, workers: int) -> np.ndarray:
    if workers <= 1 or len(sources) < 2 * workers:
        return _accumulate(neighbors, sources, edge_count) / 2.0
    chunks = [sources[i::workers] for i in range(workers)]
    partial = parallel_map(lambda chunk: _accumulate(neighbors, chunk, edge_count), chunks, workers)
    return np.sum(partial, axis=0) / 2.0


def edge_betweenness(graph: Graph, workers: int = 1) -> np.ndarray:
    """
    Exact shortest-path edge betweenness, indexed like ``graph.edge_array``.

    Each unordered node pair contributes once, split evenly over its
    shortest paths.
    """
    return _betweenness(_edge_neighbors(graph), list(range(graph.node_count)), graph.edge_count, workers)


@dataclass
class DendrogramNode:
    node_id: int
    members: np.ndarray
    conductance: float = math.nan
    children: list["DendrogramNode"] = field(default_factory=list)
    # index into Dendrogram.removal_order of the removal that split this piece
    split_at: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def walk(self) -> Iterable["DendrogramNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass
class Dendrogram:
    root: DendrogramNode
    removal_order: list[tuple[int, int]] = field(default_factory=list)

    @property
    def nodes(self) -> list[DendrogramNode]:
        return list(self.root.walk())

    @property
    def leaves(self) -> list[DendrogramNode]:
        return [node for node in self.root.walk() if node.is_leaf]


def gn_dendrogram(
    graph: Graph,
    max_removals: Optional[int] = None,
    settings: Optional[DendrogramSettings] = None,
    workers: int = 1,
) -> tuple[Dendrogram, list[ScoredCluster]]:
    """
    Divisive dendrogram by repeated removal of the highest-betweenness edge.

    Betweenness is recomputed after every removal inside the component that
    lost the edge (other components are unaffected). Ties go to the smallest
    edge id. Every piece below the root is scored on the original graph.

    Args:
        graph: Input graph; need not be connected.
        max_removals: Removal budget. Defaults to all edges for graphs up to
            ``settings.full_run_limit`` nodes and ``settings.capped_removals`` beyond.
        settings: Dendrogram knobs.
        workers: Threads for the betweenness accumulations.

    Returns:
        tuple: The dendrogram and the scored pieces.
    """
    settings = settings or DendrogramSettings()
    n, m = graph.node_count, graph.edge_count
    if max_removals is None:
        max_removals = m if n <= settings.full_run_limit else min(m, settings.capped_removals)

    tree_nodes: list[DendrogramNode] = []

    def new_node(members: np.ndarray) -> DendrogramNode:
        members = np.sort(np.asarray(members, dtype=np.int64))
        node = DendrogramNode(
            node_id=len(tree_nodes), members=members, conductance=_conductance(graph, cluster_stats(graph, members))
        )
        tree_nodes.append(node)
        return node

    root = new_node(np.arange(n))
    piece_of = np.zeros(n, dtype=np.int64)
    parts = components(graph)
    if len(parts) > 1:
        for part in parts:
            child = new_node(part)
            root.children.append(child)
            piece_of[part] = child.node_id

    neighbors = _edge_neighbors(graph)
    edges = graph.edge_array
    alive = np.ones(m, dtype=bool)
    scores = _betweenness(neighbors, list(range(n)), m, workers)
    dendrogram = Dendrogram(root=root)

    while len(dendrogram.removal_order) < max_removals and alive.any():
        rounded = np.where(alive, np.round(scores, 9), -np.inf)
        eid = int(np.argmax(rounded == rounded.max()))
        u, v = (int(x) for x in edges[eid])
        alive[eid] = False
        del neighbors[u][v], neighbors[v][u]
        dendrogram.removal_order.append((u, v))

        reached = _reachable(neighbors, u)
        parent = tree_nodes[piece_of[u]]
        affected = parent.members
        if v not in reached:
            side_u = np.fromiter(sorted(reached), dtype=np.int64)
            side_v = np.setdiff1d(parent.members, side_u)
            pieces = sorted((side_u, side_v), key=lambda piece: int(piece[0]))
            for piece in pieces:
                child = new_node(piece)
                parent.children.append(child)
                piece_of[piece] = child.node_id
            parent.split_at = len(dendrogram.removal_order) - 1

        inside = alive & np.isin(edges[:, 0], affected)
        scores[inside] = 0.0
        if inside.any():
            scores[inside] = _betweenness(neighbors, affected.tolist(), m, workers)[inside]

    removed = len(dendrogram.removal_order)
    LOGGER.info(f"dendrogram: {removed} removals, {len(dendrogram.leaves)} leaves, {len(tree_nodes)} tree nodes")

    pieces = [
        ScoredCluster(
            cluster=cluster_stats(graph, node.members),
            generator=GeneratorTag.DENDROGRAM,
            connected=True,
            params={"node": node.node_id, "split_at": node.split_at},
            scores={ScoreKind.CONDUCTANCE: node.conductance},
        )
        for node in tree_nodes
        if node is not root
    ]
    return dendrogram, pieces


def _reachable(neighbors: list[dict[int, int]], start: int) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w in neighbors[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen


def dendrogram_to_text(dendrogram: Dendrogram, labels: Optional[np.ndarray] = None) -> str:
    """Nested parentheses: a leaf is ``(id id ...)``, an inner node ``(child child ...)``."""

    def render(node: DendrogramNode) -> str:
        if node.is_leaf:
            ids = node.members if labels is None else labels[node.members]
            return "(" + " ".join(str(int(i)) for i in ids) + ")"
        return "(" + " ".join(render(child) for child in node.children) + ")"

    return render(dendrogram.root) + "\n"


_TOKEN = re.compile(r"\(|\)|-?\d+|\S")


def dendrogram_from_text(text: str, graph: Optional[Graph] = None) -> Dendrogram:
    """
    Parse ``dendrogram_to_text`` output.

    Ids are taken as dense node ids unless ``graph`` is given, in which case
    they are mapped through its labels and conductances are filled in.
    """
    tokens = _TOKEN.findall(text)
    position = 0
    counter = 0
    index = graph.label_index if graph is not None else None

    def parse() -> DendrogramNode:
        nonlocal position, counter
        if position >= len(tokens) or tokens[position] != "(":
            raise GraphFormatError(f"expected '(' at token {position}", 1)
        position += 1
        node_id = counter
        counter += 1
        children: list[DendrogramNode] = []
        ids: list[int] = []
        while position < len(tokens) and tokens[position] != ")":
            token = tokens[position]
            if token == "(":
                children.append(parse())
                continue
            try:
                ids.append(int(token))
            except ValueError:
                raise GraphFormatError(f"unexpected token {token!r}", 1) from None
            position += 1
        if position >= len(tokens):
            raise GraphFormatError("unbalanced parentheses", 1)
        position += 1
        if children and ids:
            raise GraphFormatError("a node holds either ids or children, not both", 1)
        if children:
            members = np.sort(np.concatenate([child.members for child in children]))
        else:
            if index is not None:
                unknown = [i for i in ids if i not in index]
                if unknown:
                    raise InvalidNodeError(f"unknown node ids {unknown[:10]}")
                ids = [index[i] for i in ids]
            members = np.sort(np.asarray(ids, dtype=np.int64))
        node = DendrogramNode(node_id=node_id, members=members, children=children)
        if graph is not None:
            node.conductance = _conductance(graph, cluster_stats(graph, members))
        return node

    root = parse()
    if position != len(tokens):
        raise GraphFormatError("trailing text after the dendrogram", 1)
    return Dendrogram(root=root)
