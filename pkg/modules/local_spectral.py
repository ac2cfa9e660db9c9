import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from numbers import Real
from typing import Iterable, Optional

import numpy as np

from config import LocalSpectralSettings
from utils.logger import LOGGER
from .errors import DegenerateClusterError, InvalidNodeError
from .graph import Cluster, Graph, validate_members
from .runner import parallel_map
from .scoring import GeneratorTag, ScoredCluster, ScoreKind, formula


@dataclass
class DiffusionVector:
    """
    Approximate personalized PageRank vector of the lazy walk.

    ``p`` and ``r`` are sparse maps; they hold floats or ``Fraction`` values
    depending on what ``alpha`` and ``epsilon`` were given as.
    """

    p: dict[int, Real]
    r: dict[int, Real]
    alpha: Real
    epsilon: Real
    seed_node: int
    pushes: int = 0

    @property
    def support(self) -> list[int]:
        return [u for u, mass in self.p.items() if mass > 0]

    def total_mass(self) -> Real:
        return sum(self.p.values()) + sum(self.r.values())

    def dense(self, node_count: int) -> np.ndarray:
        vector = np.zeros(node_count, dtype=np.float64)
        for u, mass in self.p.items():
            vector[u] = float(mass)
        return vector


def ppr_push(graph: Graph, seed_node: int, alpha: Real, epsilon: Real) -> DiffusionVector:
    """
    Push residual mass until ``r(u) < epsilon * d(u)`` everywhere.

    A push at ``u`` keeps ``alpha * r(u)`` in ``p(u)``, leaves half of the rest
    in ``r(u)`` and spreads the other half evenly over the neighbors. Nodes
    wait in a FIFO queue, so the result is deterministic.

    Args:
        graph: Host graph.
        seed_node: Dense id of the seed.
        alpha: Teleport probability in (0, 1).
        epsilon: Push tolerance, positive.

    Returns:
        DiffusionVector: ``p``, the leftover residual ``r`` and the push count.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0 <= seed_node < graph.node_count:
        raise InvalidNodeError(f"seed {seed_node} outside 0..{graph.node_count - 1}")

    neighbors = graph.adjacency_lists
    degrees = graph.degrees.tolist()
    one = alpha / alpha

    if degrees[seed_node] == 0:
        # nothing to diffuse into: the walk stays put
        return DiffusionVector(p={seed_node: one}, r={}, alpha=alpha, epsilon=epsilon, seed_node=seed_node)

    p: dict[int, Real] = {}
    r: dict[int, Real] = {seed_node: one}
    queue: deque[int] = deque()
    queued: set[int] = set()
    if r[seed_node] >= epsilon * degrees[seed_node]:
        queue.append(seed_node)
        queued.add(seed_node)

    pushes = 0
    while queue:
        u = queue.popleft()
        queued.discard(u)
        mass = r[u]
        d_u = degrees[u]
        if mass < epsilon * d_u:
            continue
        p[u] = p.get(u, 0) + alpha * mass
        r[u] = (1 - alpha) * mass / 2
        share = (1 - alpha) * mass / (2 * d_u)
        for v in neighbors[u]:
            r[v] = r.get(v, 0) + share
            if v not in queued and r[v] >= epsilon * degrees[v]:
                queue.append(v)
                queued.add(v)
        if u not in queued and r[u] >= epsilon * d_u:
            queue.append(u)
            queued.add(u)
        pushes += 1

    LOGGER.debug(f"ppr_push seed={seed_node} alpha={alpha} eps={float(epsilon):.2e}: {pushes} pushes, support {len(p)}")
    return DiffusionVector(p=p, r=r, alpha=alpha, epsilon=epsilon, seed_node=seed_node, pushes=pushes)


@dataclass(frozen=True, eq=False)
class SweepPrefix:
    """The first ``k`` nodes of a sweep ordering."""

    k: int
    m_s: int
    c_s: int
    vol_s: int
    conductance: float
    connected: bool
    ordering: np.ndarray = field(repr=False)

    @cached_property
    def cluster(self) -> Cluster:
        return Cluster(
            members=np.sort(self.ordering[: self.k]),
            n_s=self.k,
            m_s=self.m_s,
            c_s=self.c_s,
            vol_s=self.vol_s,
        )


@dataclass(frozen=True)
class SweepResult:
    ordering: np.ndarray
    prefixes: list[SweepPrefix]
    best_index: int

    @property
    def best(self) -> SweepPrefix:
        return self.prefixes[self.best_index]


class _DisjointSets:
    def __init__(self, size: int):
        self.parent = list(range(size))

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        root_a, root_b = self.find(a), self.find(b)
        if root_a == root_b:
            return False
        self.parent[max(root_a, root_b)] = min(root_a, root_b)
        return True


def sweep_ordering(graph: Graph, ordering: Iterable[int] | np.ndarray, max_size: Optional[int] = None) -> SweepResult:
    """
    Conductance of every prefix of ``ordering``.

    Cut and volume are updated incrementally (each node's adjacency is read
    once) and prefix connectivity is tracked with a union-find. Values come
    from the same closed form ``scoring.score`` uses, so they match it exactly.
    """
    order = np.array(ordering, dtype=np.int64).ravel()
    validate_members(graph, order)
    limit = order.size if max_size is None else min(order.size, max_size)
    if limit == 0:
        raise DegenerateClusterError("cannot sweep an empty ordering")
    order = order[:limit]
    order.setflags(write=False)

    neighbors = graph.adjacency_lists
    degrees = graph.degrees
    position = dict(zip(order.tolist(), range(limit)))
    sets = _DisjointSets(limit)

    m_values = np.zeros(limit, dtype=np.int64)
    connected = np.zeros(limit, dtype=bool)
    parts = inside = 0
    for k, u in enumerate(order.tolist()):
        parts += 1
        for v in neighbors[u]:
            j = position.get(v)
            if j is not None and j < k:
                inside += 1
                if sets.union(k, j):
                    parts -= 1
        m_values[k] = inside
        connected[k] = parts == 1

    volumes = np.cumsum(degrees[order])
    cuts = volumes - 2 * m_values
    sizes = np.arange(1, limit + 1)
    conductance = formula(
        ScoreKind.CONDUCTANCE,
        n=graph.node_count,
        m=graph.edge_count,
        n_s=sizes,
        m_s=m_values,
        c_s=cuts,
        vol_s=volumes,
    )

    prefixes = [
        SweepPrefix(
            k=int(sizes[i]),
            m_s=int(m_values[i]),
            c_s=int(cuts[i]),
            vol_s=int(volumes[i]),
            conductance=float(conductance[i]),
            connected=bool(connected[i]),
            ordering=order,
        )
        for i in range(limit)
    ]
    finite = np.where(np.isnan(conductance), np.inf, conductance)
    return SweepResult(ordering=order, prefixes=prefixes, best_index=int(np.argmin(finite)))


def sweep(graph: Graph, dv: DiffusionVector, max_size: Optional[int] = None) -> SweepResult:
    """Sweep the support of ``dv`` by ``p(u) / d(u)`` descending, ties by smaller id."""
    support = dv.support
    if not support:
        raise DegenerateClusterError(f"diffusion from seed {dv.seed_node} has empty support")
    degrees = graph.degrees

    def rank(u: int):
        d_u = int(degrees[u])
        return (-(dv.p[u] / d_u) if d_u else -np.inf, u)

    return sweep_ordering(graph, sorted(support, key=rank), max_size=max_size)


def default_epsilon_grid(graph: Graph, target_volumes: Optional[Iterable[int]] = None) -> list[float]:
    """``epsilon = 1 / (10 t)`` for each target volume ``t``; by default powers of ten up to half the volume."""
    half = graph.total_volume / 2
    if target_volumes is None:
        if half <= 0:
            return [1.0]
        targets = []
        power = 10
        while power <= half:
            targets.append(power)
            power *= 10
        targets.append(half)
    else:
        targets = list(target_volumes)
    return [1.0 / (10.0 * t) for t in sorted(set(targets))]


def _refine(graph: Graph, seed_node: int, alpha: float, epsilons: list[float], max_size: Optional[int]):
    """
    Push and sweep from coarse to fine ``epsilon`` for one ``alpha``.

    Yields ``(epsilon, connected prefixes, skipped, best)`` where ``best`` is
    the lowest-conductance connected prefix seen at this or any coarser
    ``epsilon``, so it never gets worse as ``epsilon`` shrinks.
    """
    best: Optional[SweepPrefix] = None
    for epsilon in sorted(epsilons, reverse=True):
        dv = ppr_push(graph, seed_node, alpha, epsilon)
        prefixes, skipped = [], 0
        if dv.support:
            for prefix in sweep(graph, dv, max_size=max_size).prefixes:
                if prefix.connected:
                    prefixes.append(prefix)
                else:
                    skipped += 1
        for prefix in prefixes:
            if math.isnan(prefix.conductance):
                continue
            if best is None or prefix.conductance < best.conductance:
                best = prefix
        yield epsilon, prefixes, skipped, best


def refinement_profile(
    graph: Graph,
    seed_node: int,
    alpha: float,
    epsilons: Iterable[float],
    max_size: Optional[int] = None,
) -> list[tuple[float, float]]:
    """Best connected conductance reached by each ``epsilon``, coarse to fine (``nan`` until a prefix exists)."""
    return [
        (epsilon, math.nan if best is None else best.conductance)
        for epsilon, _, _, best in _refine(graph, seed_node, alpha, list(epsilons), max_size)
    ]


def local_cluster(
    graph: Graph,
    seed_node: int,
    alphas: Iterable[float],
    epsilons: Iterable[float],
    max_size: Optional[int] = None,
) -> list[ScoredCluster]:
    """
    Run push and sweep for every ``(alpha, epsilon)`` pair and collect the connected prefixes.

    Epsilons run from coarse to fine. Disconnected prefixes are skipped. A set
    reached by several parameter pairs is emitted once, with the parameters
    that found it first; the best set so far is always among the emitted ones.
    """
    alphas, epsilons = list(alphas), list(epsilons)
    if not alphas or not epsilons:
        raise ValueError("alpha and epsilon grids must be nonempty")

    seen: set[bytes] = set()
    emitted: list[ScoredCluster] = []
    skipped = 0
    for alpha in alphas:
        for epsilon, prefixes, dropped, _ in _refine(graph, seed_node, alpha, epsilons, max_size):
            skipped += dropped
            for prefix in prefixes:
                cluster = prefix.cluster
                if cluster.key in seen:
                    continue
                seen.add(cluster.key)
                emitted.append(
                    ScoredCluster(
                        cluster=cluster,
                        generator=GeneratorTag.LOCAL_SPECTRAL,
                        connected=True,
                        params={"seed": seed_node, "alpha": alpha, "epsilon": epsilon, "k": prefix.k},
                        scores={ScoreKind.CONDUCTANCE: prefix.conductance},
                    )
                )
    if skipped:
        LOGGER.debug(f"local_cluster seed={seed_node}: skipped {skipped} disconnected prefixes")
    return emitted


def choose_seeds(graph: Graph, sample_size: int, seed_all_limit: int = 10_000, seed: int = 0) -> np.ndarray:
    """Every node on small graphs, otherwise a uniform sample without replacement (sorted)."""
    n = graph.node_count
    if n <= seed_all_limit or sample_size >= n:
        return np.arange(n, dtype=np.int64)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=sample_size, replace=False))


def local_spectral_sample(
    graph: Graph,
    settings: Optional[LocalSpectralSettings] = None,
    seed: int = 0,
    workers: int = 1,
) -> list[ScoredCluster]:
    """Candidates from every chosen seed, merged in seed order."""
    settings = settings or LocalSpectralSettings()
    seeds = choose_seeds(graph, settings.seed_sample_size, settings.seed_all_limit, seed)
    epsilons = default_epsilon_grid(graph, settings.target_volumes)
    LOGGER.info(
        f"local-spectral: {seeds.size} seeds, {len(settings.alphas)} alphas x {len(epsilons)} epsilons"
    )
    batches = parallel_map(
        lambda node: local_cluster(graph, int(node), settings.alphas, epsilons, settings.max_cluster_size),
        seeds.tolist(),
        workers,
    )
    return [candidate for batch in batches for candidate in batch]
