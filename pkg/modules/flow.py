import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from config import FlowSettings
from utils.logger import LOGGER
from .errors import (
    CapacityOverflowError,
    DegenerateClusterError,
    FlowCertificateError,
    InvalidNodeError,
)
from .graph import Cluster, Graph, as_members, cluster_stats, induced_subgraph, is_connected_subset
from .runner import parallel_map
from .scoring import GeneratorTag, ScoredCluster, ScoreKind, formula

MAX_CAPACITY = 2**63 - 1


class FlowNetwork:
    """
    Directed network with integer capacities.

    Arcs are stored in pairs: arc ``2k`` and its reverse ``2k + 1``, so the
    reverse of ``a`` is ``a ^ 1``.
    """

    def __init__(self, node_count: int, source: int, sink: int):
        self.node_count = node_count
        self.source = source
        self.sink = sink
        self.heads: list[int] = []
        self.tails: list[int] = []
        self.capacities: list[int] = []
        self.adjacency: list[list[int]] = [[] for _ in range(node_count)]

    def add_arc(self, tail: int, head: int, capacity: int, reverse_capacity: int = 0) -> int:
        for node in (tail, head):
            if not 0 <= node < self.node_count:
                raise InvalidNodeError(f"arc endpoint {node} outside 0..{self.node_count - 1}")
        for value in (capacity, reverse_capacity):
            if value < 0:
                raise ValueError(f"capacities must be non-negative, got {value}")
            if value > MAX_CAPACITY:
                raise CapacityOverflowError(f"capacity {value} does not fit in 64 bits")
        arc = len(self.heads)
        self.tails.extend((tail, head))
        self.heads.extend((head, tail))
        self.capacities.extend((int(capacity), int(reverse_capacity)))
        self.adjacency[tail].append(arc)
        self.adjacency[head].append(arc + 1)
        return arc

    @staticmethod
    def reverse(arc: int) -> int:
        return arc ^ 1


def _levels(net: FlowNetwork, residual: list[int]) -> list[int]:
    level = [-1] * net.node_count
    level[net.source] = 0
    queue = deque([net.source])
    while queue:
        u = queue.popleft()
        for arc in net.adjacency[u]:
            v = net.heads[arc]
            if residual[arc] > 0 and level[v] < 0:
                level[v] = level[u] + 1
                queue.append(v)
    return level


def _augment(net: FlowNetwork, residual: list[int], level: list[int], cursor: list[int]) -> int:
    """Push one blocking-flow path along the level graph. Returns the amount pushed (0 if none)."""
    stack = [net.source]
    path: list[int] = []
    while stack:
        u = stack[-1]
        if u == net.sink:
            amount = min(residual[arc] for arc in path)
            for arc in path:
                residual[arc] -= amount
                residual[arc ^ 1] += amount
            return amount

        arcs = net.adjacency[u]
        while cursor[u] < len(arcs):
            arc = arcs[cursor[u]]
            if residual[arc] > 0 and level[net.heads[arc]] == level[u] + 1:
                break
            cursor[u] += 1

        if cursor[u] == len(arcs):
            # dead end: retreat and skip the arc that led here
            stack.pop()
            if path:
                path.pop()
                cursor[stack[-1]] += 1
            continue

        arc = arcs[cursor[u]]
        path.append(arc)
        stack.append(net.heads[arc])
    return 0


def max_flow(net: FlowNetwork) -> tuple[int, set[int]]:
    """
    Maximum s-t flow by Dinic's algorithm.

    Returns the flow value and the source side of a minimum cut (nodes
    reachable from ``s`` in the final residual network). The cut capacity is
    recomputed from the original capacities and must equal the flow value.
    """
    if not (0 <= net.source < net.node_count and 0 <= net.sink < net.node_count):
        raise InvalidNodeError("source or sink outside the network")
    if net.source == net.sink:
        raise InvalidNodeError("source and sink must differ")

    residual = list(net.capacities)
    value = 0
    while True:
        level = _levels(net, residual)
        if level[net.sink] < 0:
            break
        cursor = [0] * net.node_count
        while True:
            pushed = _augment(net, residual, level, cursor)
            if pushed == 0:
                break
            value += pushed

    source_side = {node for node, depth in enumerate(_levels(net, residual)) if depth >= 0}
    cut = sum(
        capacity
        for arc, capacity in enumerate(net.capacities)
        if net.tails[arc] in source_side and net.heads[arc] not in source_side
    )
    if cut != value:
        raise FlowCertificateError(f"flow {value} differs from cut capacity {cut}")
    return value, source_side


@dataclass
class Bisection:
    side_a: Cluster
    side_b: Cluster
    imbalance: float
    over_tolerance: bool = False

    @property
    def cut(self) -> int:
        return self.side_a.c_s


@dataclass
class _Level:
    adjacency: sp.csr_matrix
    weights: np.ndarray
    to_coarse: Optional[np.ndarray] = None

    @property
    def strength(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()


def _heavy_edge_matching(level: _Level, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    adjacency = level.adjacency
    n = adjacency.shape[0]
    indptr, indices, data = adjacency.indptr, adjacency.indices, adjacency.data
    tie_break = rng.random(n)
    mate = np.full(n, -1, dtype=np.int64)
    for u in rng.permutation(n).tolist():
        if mate[u] >= 0:
            continue
        best, best_weight, best_tie = -1, 0.0, -1.0
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if v == u or mate[v] >= 0:
                continue
            weight = data[k]
            if weight > best_weight or (weight == best_weight and tie_break[v] > best_tie):
                best, best_weight, best_tie = v, weight, tie_break[v]
        if best >= 0:
            mate[u], mate[best] = best, u
        else:
            mate[u] = u

    coarse = np.full(n, -1, dtype=np.int64)
    count = 0
    for u in range(n):
        if coarse[u] < 0:
            coarse[u] = coarse[mate[u]] = count
            count += 1
    return coarse, count


def _contract(level: _Level, coarse: np.ndarray, count: int) -> _Level:
    n = level.adjacency.shape[0]
    projection = sp.csr_matrix((np.ones(n), (np.arange(n), coarse)), shape=(n, count))
    adjacency = sp.csr_matrix(projection.T @ level.adjacency @ projection)
    adjacency.setdiag(0)
    adjacency.eliminate_zeros()
    adjacency.sort_indices()
    return _Level(adjacency=adjacency, weights=projection.T @ level.weights, to_coarse=coarse)


def _spectral_order(level: _Level, rng: np.random.Generator) -> np.ndarray:
    adjacency = level.adjacency
    n = adjacency.shape[0]
    if adjacency.nnz == 0 or n > 2000:
        return rng.permutation(n)
    dense = adjacency.toarray()
    strength = dense.sum(axis=1)
    strength[strength == 0] = 1.0
    laplacian = np.diag(dense.sum(axis=1)) - dense
    _, vectors = la.eigh(laplacian, np.diag(strength), subset_by_index=[1, 1])
    return np.argsort(vectors[:, 0], kind="stable")


def _initial_split(level: _Level, rng: np.random.Generator) -> np.ndarray:
    """Cut the Fiedler ordering where the cumulative weight is closest to half."""
    order = _spectral_order(level, rng)
    cumulative = np.cumsum(level.weights[order])
    total = cumulative[-1]
    distance = np.abs(2.0 * cumulative[:-1] - total)
    cut_after = int(np.argmin(distance)) + 1
    side = np.zeros(len(order), dtype=bool)
    side[order[:cut_after]] = True
    return side


def _imbalance(weights: np.ndarray, side: np.ndarray, total: float) -> float:
    if total <= 0:
        return 0.0
    weight_a = float(weights[side].sum())
    return abs(2.0 * weight_a - total) / total


def _gains(level: _Level, side: np.ndarray) -> np.ndarray:
    """Cut reduction obtained by moving each node to the other side."""
    to_a = level.adjacency @ side.astype(np.float64)
    to_b = level.strength - to_a
    return np.where(side, to_b - to_a, to_a - to_b)


def _node_gain(adjacency: sp.csr_matrix, side: np.ndarray, u: int) -> float:
    start, stop = adjacency.indptr[u], adjacency.indptr[u + 1]
    neighbours = adjacency.indices[start:stop]
    weights = adjacency.data[start:stop]
    across = side[neighbours] != side[u]
    return float(weights[across].sum() - weights[~across].sum())


def _rebalance(level: _Level, side: np.ndarray, total: float, tolerance: float) -> None:
    """Move the cheapest nodes off the heavier side while that shrinks the imbalance."""
    weights = level.weights
    weight_a = float(weights[side].sum())
    while True:
        current = abs(2.0 * weight_a - total) / total
        if current <= tolerance:
            return
        heavy = bool(2.0 * weight_a > total)
        movable = np.flatnonzero(side == heavy)
        if movable.size <= 1:
            return
        delta = -weights[movable] if heavy else weights[movable]
        shrinks = np.abs(2.0 * (weight_a + delta) - total) / total < current
        if not shrinks.any():
            return
        gains = np.where(shrinks, _gains(level, side)[movable], -np.inf)
        pick = int(np.argmax(gains))
        side[movable[pick]] = not heavy
        weight_a += float(delta[pick])


def _refine(level: _Level, side: np.ndarray, total: float, tolerance: float, passes: int) -> None:
    """Greedy boundary moves that strictly reduce the cut without breaking balance."""
    weights = level.weights
    weight_a = float(weights[side].sum())
    count_a = int(np.count_nonzero(side))
    n = len(side)
    for _ in range(passes):
        gains = _gains(level, side)
        order = np.lexsort((np.arange(n), -gains))
        moved = False
        for u in order[gains[order] > 0].tolist():
            if _node_gain(level.adjacency, side, u) <= 0:
                continue
            in_a = bool(side[u])
            if (count_a if in_a else n - count_a) <= 1:
                continue
            shifted = weight_a - weights[u] if in_a else weight_a + weights[u]
            before = abs(2.0 * weight_a - total) / total
            after = abs(2.0 * shifted - total) / total
            if after <= tolerance or after <= before:
                side[u] = not in_a
                weight_a = float(shifted)
                count_a += -1 if in_a else 1
                moved = True
        if not moved:
            return


def bisect(
    graph: Graph,
    seed: int | np.random.Generator = 0,
    tolerance: float = 0.02,
    settings: Optional[FlowSettings] = None,
) -> Bisection:
    """
    Volume-balanced bisection by multilevel coarsening.

    Heavy-edge matching (random visit order and tie-breaks) shrinks the
    graph to at most ``coarsest_size`` nodes, the coarsest graph is cut
    along its Fiedler ordering, and each uncoarsening step rebalances and
    then applies cut-reducing boundary moves.

    Args:
        graph: Graph with at least two nodes.
        seed: Integer seed or a ready generator.
        tolerance: Allowed ``|vol(A) - vol(B)| / vol(G)``.
        settings: Coarsening and refinement knobs.

    Returns:
        Bisection: Both sides, their imbalance and an over-tolerance flag.
    """
    settings = settings or FlowSettings()
    n = graph.node_count
    if n < 2:
        raise DegenerateClusterError("bisect needs at least two nodes")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    weights = graph.degrees.astype(np.float64)
    total = float(weights.sum())
    if total == 0:
        side = np.zeros(n, dtype=bool)
        side[rng.permutation(n)[: n // 2]] = True
        return _as_bisection(graph, side, tolerance)

    levels = [_Level(adjacency=graph.adjacency, weights=weights)]
    while levels[-1].adjacency.shape[0] > settings.coarsest_size:
        coarse, count = _heavy_edge_matching(levels[-1], rng)
        if count > 0.95 * levels[-1].adjacency.shape[0]:
            break
        levels.append(_contract(levels[-1], coarse, count))

    side = _initial_split(levels[-1], rng)
    for index in range(len(levels) - 1, -1, -1):
        level = levels[index]
        _rebalance(level, side, total, tolerance)
        _refine(level, side, total, tolerance, settings.refinement_passes)
        if index > 0:
            side = side[level.to_coarse]
    return _as_bisection(graph, side, tolerance)


def _as_bisection(graph: Graph, side: np.ndarray, tolerance: float) -> Bisection:
    side_a = cluster_stats(graph, np.flatnonzero(side))
    side_b = cluster_stats(graph, np.flatnonzero(~side))
    total = graph.total_volume
    imbalance = abs(side_a.vol_s - side_b.vol_s) / total if total else 0.0
    over = imbalance > tolerance
    if over:
        LOGGER.warning(f"Bisection imbalance {imbalance:.4f} exceeds tolerance {tolerance}")
    return Bisection(side_a=side_a, side_b=side_b, imbalance=imbalance, over_tolerance=over)


def _check_capacities(cluster: Cluster, max_degree: int) -> None:
    for label, value in (
        ("vol(a) * d_max", cluster.vol_s * max_degree),
        ("c(a) * d_max", cluster.c_s * max_degree),
        ("c(a) * vol(a)", cluster.c_s * cluster.vol_s),
    ):
        if value > MAX_CAPACITY:
            raise CapacityOverflowError(f"{label} = {value} does not fit in 64 bits")


def _improve_once(graph: Graph, current: Cluster) -> Optional[Cluster]:
    """One flow test: the best S inside ``current`` if it strictly beats c/vol of ``current``."""
    members = current.members
    k = members.size
    vol_a, cut_a = current.vol_s, current.c_s
    _check_capacities(current, int(graph.degrees[members].max()))

    mask = current.mask(graph.node_count)
    source, sink = k, k + 1
    net = FlowNetwork(k + 2, source, sink)
    for i, u in enumerate(members.tolist()):
        neighbours = graph.neighbors(u)
        inside = neighbours[mask[neighbours]]
        boundary = neighbours.size - inside.size
        if boundary:
            net.add_arc(source, i, vol_a * boundary)
        for v in inside[inside > u].tolist():
            j = int(np.searchsorted(members, v))
            net.add_arc(i, j, vol_a, vol_a)
        net.add_arc(i, sink, cut_a * int(neighbours.size))

    value, source_side = max_flow(net)
    if value >= cut_a * vol_a:
        return None
    chosen = [int(members[i]) for i in range(k) if i not in source_side]
    if not chosen:
        return None
    candidate = cluster_stats(graph, chosen)
    if candidate.c_s * vol_a < cut_a * candidate.vol_s:
        return candidate
    return None


def mqi(graph: Graph, cluster: Cluster | Iterable[int]) -> Cluster:
    """
    Flow-based quotient-cut improvement inside ``cluster``.

    Repeats a max-flow test asking whether some ``S`` in the current set has
    ``c_S * vol(A) < c_A * vol(S)`` and moves to it, until none exists. The
    result minimizes ``c_S / vol(S)`` over subsets of the input and may be
    internally disconnected.
    """
    current = cluster if isinstance(cluster, Cluster) else cluster_stats(graph, as_members(graph, cluster))
    if current.n_s == 0:
        raise DegenerateClusterError("mqi needs a nonempty cluster")
    if 2 * current.vol_s > graph.total_volume:
        LOGGER.warning(f"mqi input holds more than half the volume ({current.vol_s} of {graph.total_volume})")

    original = current
    rounds = 0
    while current.c_s > 0 and current.vol_s > 0:
        improved = _improve_once(graph, current)
        if improved is None:
            break
        current = improved
        rounds += 1
    LOGGER.debug(f"mqi: {rounds} improving rounds, {original.n_s} -> {current.n_s} nodes")

    if original is not current and _conductance(graph, current) > _conductance(graph, original):
        # only reachable when the input held more than half the volume
        return original
    return current


def _conductance(graph: Graph, cluster: Cluster) -> float:
    value = float(
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
    return math.inf if math.isnan(value) else value


def recursion_depth(node_count: int, min_size: int) -> int:
    if node_count <= min_size:
        return 0
    return math.ceil(math.log2(node_count / min_size))


def _sample_trial(graph: Graph, trial: int, seed: int, settings: FlowSettings) -> list[ScoredCluster]:
    rng = np.random.default_rng([seed, trial])
    max_depth = recursion_depth(graph.node_count, settings.min_recursion_size)
    half_volume = graph.total_volume / 2
    emitted: list[ScoredCluster] = []

    pending = [(np.arange(graph.node_count, dtype=np.int64), 0, "")]
    while pending:
        nodes, depth, path = pending.pop(0)
        sub = graph if depth == 0 else induced_subgraph(graph, nodes)
        split = bisect(sub, rng, settings.tolerance, settings)
        sides = [nodes[split.side_a.members], nodes[split.side_b.members]]
        for label, side_nodes in zip("ab", sides):
            piece = cluster_stats(graph, side_nodes)
            if piece.vol_s == 0 or piece.vol_s > half_volume:
                continue
            result = mqi(graph, piece)
            emitted.append(
                ScoredCluster(
                    cluster=result,
                    generator=GeneratorTag.MQI,
                    connected=is_connected_subset(graph, result),
                    params={"trial": trial, "depth": depth, "path": path + label},
                )
            )
        if depth < max_depth:
            for label, side_nodes in zip("ab", sides):
                if side_nodes.size >= settings.min_recursion_size:
                    pending.append((side_nodes, depth + 1, path + label))
    return emitted


def metis_mqi_sample(
    graph: Graph,
    trials: int,
    seed: int = 0,
    settings: Optional[FlowSettings] = None,
    workers: int = 1,
) -> list[ScoredCluster]:
    """
    Randomized bisection followed by MQI, repeated ``trials`` times.

    Every trial bisects the graph, improves each side holding at most half
    the volume with ``mqi`` and recurses into both sides to depth
    ``ceil(log2(n / min_recursion_size))``. Identical sets are emitted once,
    first occurrence in trial order wins.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    settings = settings or FlowSettings()
    if graph.node_count < 2:
        return []

    per_trial = parallel_map(lambda trial: _sample_trial(graph, trial, seed, settings), range(trials), workers)
    seen: set[bytes] = set()
    candidates: list[ScoredCluster] = []
    for batch in per_trial:
        for candidate in batch:
            if candidate.cluster.key in seen:
                continue
            seen.add(candidate.cluster.key)
            candidates.append(candidate)

    disconnected = sum(not candidate.connected for candidate in candidates)
    LOGGER.info(f"metis+mqi: {trials} trials, {len(candidates)} distinct candidates, {disconnected} disconnected")
    return candidates
