import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from config import ApplicationSettings, RunConfig
from utils.logger import LOGGER
from .baselines import Dendrogram, global_spectral_sweep, gn_dendrogram
from .errors import DegenerateClusterError, DisconnectedGraphError, OracleLimitError
from .flow import metis_mqi_sample
from .graph import Cluster, Graph, cluster_stats, components, induced_subgraph, is_connected_subset
from .local_spectral import default_epsilon_grid, local_cluster, local_spectral_sample
from .scoring import GeneratorTag, Orientation, ScoredCluster, ScoreKind, avg_shortest_path, formula

__all__ = [
    "GeneratorTag",
    "ScoredCluster",
    "NcpPoint",
    "NcpProfile",
    "BiasRow",
    "ProfileShape",
    "split_disconnected",
    "build_ncp",
    "merge_profiles",
    "exact_ncp",
    "internal_conductance",
    "bias_report",
    "generate_candidates",
    "connectivity_summary",
    "cross_score_profile",
    "profile_shape",
]


def split_disconnected(graph: Graph, candidates: Iterable[ScoredCluster]) -> list[ScoredCluster]:
    """
    Replace every internally disconnected candidate by its connected components.

    Children are tagged ``split-child``, carry their parent's id and
    parameters, and are scored from fresh statistics.
    """
    result: list[ScoredCluster] = []
    split = 0
    for candidate in candidates:
        if candidate.connected:
            result.append(candidate)
            continue
        split += 1
        for index, piece in enumerate(components(graph, candidate.cluster)):
            result.append(
                ScoredCluster(
                    cluster=cluster_stats(graph, piece),
                    generator=GeneratorTag.SPLIT_CHILD,
                    connected=True,
                    params={
                        **candidate.params,
                        "parent": candidate.cluster_id,
                        "parent_generator": candidate.generator.value,
                        "piece": index,
                    },
                )
            )
    if split:
        LOGGER.debug(f"Split {split} disconnected candidates into connected pieces")
    return result


@dataclass(frozen=True)
class NcpPoint:
    k: int
    value: float
    witness_id: Optional[int]
    generator: str
    # the witness realizes size n - k and was mapped through its complement
    complement: bool = False
    witness: Optional[Cluster] = field(default=None, compare=False, repr=False)


def _prefers(kind: ScoreKind, candidate: NcpPoint, incumbent: Optional[NcpPoint]) -> bool:
    if incumbent is None:
        return True
    if kind.better(candidate.value, incumbent.value):
        return True
    if candidate.value != incumbent.value:
        return False
    # equal score: smaller witness id wins, missing ids lose
    if candidate.witness_id is None:
        return False
    return incumbent.witness_id is None or candidate.witness_id < incumbent.witness_id


@dataclass
class NcpProfile:
    """Best score per realized cluster size, with the witness that attains it."""

    kind: ScoreKind
    points: dict[int, NcpPoint] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    def __contains__(self, k: int) -> bool:
        return k in self.points

    def __getitem__(self, k: int) -> NcpPoint:
        return self.points[k]

    @property
    def sizes(self) -> list[int]:
        return sorted(self.points)

    @property
    def envelope(self) -> dict[int, float]:
        return {k: self.points[k].value for k in self.sizes}

    def offer(self, point: NcpPoint) -> bool:
        if _prefers(self.kind, point, self.points.get(point.k)):
            self.points[point.k] = point
            return True
        return False

    def merge(self, other: "NcpProfile") -> "NcpProfile":
        if other.kind is not self.kind:
            raise ValueError(f"cannot merge a {other.kind.value} profile into a {self.kind.value} profile")
        merged = NcpProfile(kind=self.kind, points=dict(self.points))
        for point in other.points.values():
            merged.offer(point)
        return merged

    def to_rows(self) -> list[dict[str, str]]:
        return [
            {
                "kind": self.kind.value,
                "k": str(k),
                "phi": f"{self.points[k].value:.12g}",
                "witness_id": "" if self.points[k].witness_id is None else str(self.points[k].witness_id),
                "generator": self.points[k].generator,
            }
            for k in self.sizes
        ]


def build_ncp(graph: Graph, candidates: Iterable[ScoredCluster], kind: ScoreKind) -> NcpProfile:
    """
    Envelope of ``candidates`` under ``kind`` over sizes ``1..n // 2``.

    Lower-is-better and descriptive kinds keep the minimum per size,
    higher-is-better kinds the maximum. Candidates larger than ``n // 2``
    count for their complement's size when the kind is boundary-symmetric
    and are dropped otherwise. Undefined scores are skipped.
    """
    n = graph.node_count
    half = n // 2
    profile = NcpProfile(kind=kind)
    for candidate in candidates:
        value = candidate.value(graph, kind)
        if math.isnan(value):
            continue
        k, complement = candidate.size, False
        if k > half:
            if not kind.boundary_symmetric:
                continue
            k, complement = n - k, True
        if k < 1:
            continue
        profile.offer(
            NcpPoint(
                k=k,
                value=value,
                witness_id=candidate.cluster_id,
                generator=candidate.generator.value,
                complement=complement,
                witness=candidate.cluster,
            )
        )
    return profile


def merge_profiles(*profiles: NcpProfile) -> NcpProfile:
    """Pointwise envelope of several profiles of the same kind."""
    if not profiles:
        raise ValueError("merge_profiles needs at least one profile")
    merged = NcpProfile(kind=profiles[0].kind)
    for profile in profiles:
        merged = merged.merge(profile)
    return merged


def _subset_statistics(graph: Graph, bits: np.ndarray) -> dict[str, np.ndarray]:
    degrees = graph.degrees
    as_int = bits.astype(np.int64)
    inside = np.zeros(bits.shape[0], dtype=np.int64)
    for u, v in graph.edge_array.tolist():
        inside += as_int[:, u] & as_int[:, v]
    volumes = as_int @ degrees
    return {
        "n_s": as_int.sum(axis=1),
        "m_s": inside,
        "c_s": volumes - 2 * inside,
        "vol_s": volumes,
    }


def _subset_odf(graph: Graph, bits: np.ndarray) -> dict[str, np.ndarray]:
    degrees = graph.degrees.astype(np.float64)
    inside = bits.astype(np.float64) @ graph.adjacency.toarray()
    with np.errstate(divide="ignore", invalid="ignore"):
        fractions = (degrees - inside) / degrees
        outside_majority = (2.0 * inside < degrees).astype(np.float64)
    members = bits.sum(axis=1)
    isolated = (bits & (degrees == 0)).any(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        odf = {
            "max_odf": np.where(bits, fractions, -np.inf).max(axis=1),
            "avg_odf": np.where(bits, fractions, 0.0).sum(axis=1) / members,
            "flake_odf": np.where(bits, outside_majority, 0.0).sum(axis=1) / members,
        }
    return {name: np.where(isolated, np.nan, values) for name, values in odf.items()}


def _connected_masks(graph: Graph, masks: np.ndarray) -> np.ndarray:
    neighbor_masks = np.zeros(graph.node_count, dtype=np.int64)
    for u, v in graph.edge_array.tolist():
        neighbor_masks[u] |= 1 << v
        neighbor_masks[v] |= 1 << u
    reach = masks & -masks
    for _ in range(graph.node_count):
        frontier = np.zeros_like(masks)
        for u in range(graph.node_count):
            frontier |= np.where((reach >> u) & 1, neighbor_masks[u], 0)
        grown = reach | (frontier & masks)
        if np.array_equal(grown, reach):
            break
        reach = grown
    return reach == masks


def exact_ncp(
    graph: Graph,
    kind: ScoreKind = ScoreKind.CONDUCTANCE,
    max_n: int = 18,
    connected_only: bool = False,
) -> NcpProfile:
    """
    Exact profile by enumerating every subset of size ``1..n // 2``.

    Subsets are bitmasks scored in one vectorized pass. Witness ids are the
    masks themselves; among equal scores the smallest mask wins. Larger
    sizes are covered through complements for boundary-symmetric kinds.

    Args:
        graph: Graph with at most ``max_n`` nodes.
        kind: Score to minimize (or maximize, for higher-is-better kinds).
        max_n: Refuse larger graphs.
        connected_only: Only consider internally connected subsets.

    Returns:
        NcpProfile: Exact envelope with ``oracle`` witnesses.
    """
    n = graph.node_count
    if n > max_n:
        raise OracleLimitError(f"exact enumeration is limited to {max_n} nodes, graph has {n}")
    profile = NcpProfile(kind=kind)
    if n < 2:
        return profile

    masks = np.arange(1, 1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    sizes = bits.sum(axis=1)
    keep = sizes <= n // 2
    if connected_only:
        keep &= _connected_masks(graph, masks)
    masks, bits, sizes = masks[keep], bits[keep], sizes[keep]

    statistics = _subset_statistics(graph, bits)
    odf = _subset_odf(graph, bits) if kind.uses_odf else {}
    values = formula(kind, n=n, m=graph.edge_count, **statistics, **odf)
    defined = ~np.isnan(values)

    for k in range(1, n // 2 + 1):
        at_k = np.flatnonzero((sizes == k) & defined)
        if at_k.size == 0:
            continue
        scores = values[at_k]
        target = scores.max() if kind.orientation is Orientation.HIGHER else scores.min()
        best = int(at_k[np.flatnonzero(scores == target)[0]])
        witness = cluster_stats(graph, np.flatnonzero(bits[best]))
        profile.offer(
            NcpPoint(k=k, value=float(values[best]), witness_id=int(masks[best]),
                     generator=GeneratorTag.ORACLE.value, witness=witness)
        )
    LOGGER.debug(f"exact_ncp: {masks.size} subsets of a {n}-node graph scored under {kind.value}")
    return profile


def internal_conductance(
    graph: Graph,
    cluster: Cluster | Iterable[int],
    settings: Optional[ApplicationSettings] = None,
    seed: int = 0,
) -> float:
    """
    Conductance of the best cut found inside ``cluster``'s induced subgraph.

    Small clusters are solved exactly. Larger ones take the minimum over
    seeded local clusters from every member and one bisection followed by
    flow improvement, which is an upper bound on the true value.
    """
    settings = settings or ApplicationSettings()
    cluster = cluster if isinstance(cluster, Cluster) else cluster_stats(graph, cluster)
    if cluster.n_s < 2:
        raise DegenerateClusterError("internal conductance needs at least two members")
    sub = induced_subgraph(graph, cluster)
    if not is_connected_subset(sub, np.arange(sub.node_count)):
        raise DisconnectedGraphError("cluster is internally disconnected; split it first")

    limit = settings.ncp.internal_exact_limit
    if sub.node_count <= limit:
        profile = exact_ncp(sub, ScoreKind.CONDUCTANCE, max_n=limit)
        return min(profile.envelope.values())

    local = settings.local_spectral
    epsilons = default_epsilon_grid(sub, local.target_volumes)
    found: list[ScoredCluster] = []
    for node in range(sub.node_count):
        found.extend(local_cluster(sub, node, local.alphas, epsilons))
    found.extend(metis_mqi_sample(sub, trials=1, seed=seed, settings=settings.flow))
    values = [candidate.value(sub, ScoreKind.CONDUCTANCE) for candidate in found]
    values = [value for value in values if not math.isnan(value)]
    if not values:
        raise DegenerateClusterError("no internal cut could be scored")
    return min(values)


@dataclass(frozen=True)
class BiasRow:
    cluster_id: Optional[int]
    generator: str
    k: int
    phi_external: float
    phi_internal: float
    ratio: float
    avg_path: float
    connected: bool
    # internal figures come from the largest connected piece
    flagged: bool = False

    def to_row(self) -> dict[str, str]:
        return {
            "cluster_id": "" if self.cluster_id is None else str(self.cluster_id),
            "generator": self.generator,
            "k": str(self.k),
            "phi_external": f"{self.phi_external:.12g}",
            "phi_internal": f"{self.phi_internal:.12g}",
            "ratio": f"{self.ratio:.12g}",
            "avg_path": f"{self.avg_path:.12g}",
            "connected": "yes" if self.connected else "no",
            "flagged": "yes" if self.flagged else "no",
        }


def bias_report(
    graph: Graph,
    candidates: Iterable[ScoredCluster],
    settings: Optional[ApplicationSettings] = None,
    seed: int = 0,
) -> list[BiasRow]:
    """
    External versus internal conductance and compactness for each candidate.

    Disconnected candidates take internal conductance and average path
    length from their largest connected piece and are flagged. Singletons
    have no internal cut, so their internal figures are NaN.
    """
    settings = settings or ApplicationSettings()
    rows: list[BiasRow] = []
    for candidate in candidates:
        body = candidate.cluster
        flagged = False
        if not candidate.connected:
            pieces = components(graph, body)
            largest = min(pieces, key=lambda piece: (-piece.size, int(piece[0])))
            body = cluster_stats(graph, largest)
            flagged = True

        external = candidate.value(graph, ScoreKind.CONDUCTANCE)
        internal = avg_path = math.nan
        if body.n_s >= 2:
            internal = internal_conductance(graph, body, settings, seed)
            avg_path = avg_shortest_path(graph, body, settings.scoring.sample_pairs, seed)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = float(np.divide(external, internal))

        rows.append(
            BiasRow(
                cluster_id=candidate.cluster_id,
                generator=candidate.generator.value,
                k=candidate.size,
                phi_external=external,
                phi_internal=internal,
                ratio=ratio,
                avg_path=avg_path,
                connected=candidate.connected,
                flagged=flagged,
            )
        )
    LOGGER.info(f"bias report: {len(rows)} rows, {sum(row.flagged for row in rows)} flagged")
    return rows


def _global_spectral_by_component(graph: Graph, config: RunConfig) -> list[ScoredCluster]:
    parts = [part for part in components(graph) if part.size >= 2]
    if len(parts) == 1 and parts[0].size == graph.node_count:
        return global_spectral_sweep(graph, config.settings.bounds)

    LOGGER.warning(f"Graph is disconnected; running the global spectral sweep in each of {len(parts)} components")
    emitted: list[ScoredCluster] = []
    for part in parts:
        sub = induced_subgraph(graph, part)
        for candidate in global_spectral_sweep(sub, config.settings.bounds):
            members = part[candidate.cluster.members]
            candidate.cluster = cluster_stats(graph, members)
            candidate.connected = is_connected_subset(graph, members)
            candidate.scores.clear()
            emitted.append(candidate)
    return emitted


def generate_candidates(
    graph: Graph,
    config: RunConfig,
    workers: Optional[int] = None,
    on_dendrogram: Optional[Callable[[Dendrogram], None]] = None,
) -> list[ScoredCluster]:
    """
    Run every configured generator and number the candidates.

    Generators run in ``config.methods`` order and ids are assigned in
    emission order, so the result is identical for any worker count.
    ``on_dendrogram`` receives the betweenness dendrogram when that method runs.
    """
    workers = workers or config.workers
    settings = config.settings
    candidates: list[ScoredCluster] = []
    for method in config.methods:
        if method == "local-spectral":
            batch = local_spectral_sample(graph, settings.local_spectral, config.seed, workers)
        elif method == "mqi":
            batch = metis_mqi_sample(graph, settings.flow.trials, config.seed, settings.flow, workers)
        elif method == "global-spectral":
            batch = _global_spectral_by_component(graph, config)
        elif method == "dendrogram":
            dendrogram, batch = gn_dendrogram(graph, settings=settings.dendrogram, workers=workers)
            if on_dendrogram is not None:
                on_dendrogram(dendrogram)
        else:
            raise ValueError(f"unknown method {method!r}")
        LOGGER.info(f"{method}: {len(batch)} candidates")
        candidates.extend(batch)

    for cluster_id, candidate in enumerate(candidates):
        candidate.cluster_id = cluster_id
    connectivity_summary(candidates)
    return candidates


def connectivity_summary(candidates: Iterable[ScoredCluster]) -> dict[str, tuple[int, float]]:
    """Per generator: candidate count and the fraction that is internally connected."""
    counts: dict[str, list[int]] = {}
    for candidate in candidates:
        total_connected = counts.setdefault(candidate.generator.value, [0, 0])
        total_connected[0] += 1
        total_connected[1] += int(candidate.connected)
    summary = {name: (total, connected / total) for name, (total, connected) in sorted(counts.items())}
    for name, (total, fraction) in summary.items():
        LOGGER.info(f"{name}: {total} candidates, {100.0 * fraction:.1f}% connected")
    return summary


def cross_score_profile(
    graph: Graph,
    candidates: Iterable[ScoredCluster],
    base: ScoreKind = ScoreKind.CONDUCTANCE,
    kinds: Optional[Iterable[ScoreKind]] = None,
) -> dict[ScoreKind, NcpProfile]:
    """Rescore the witnesses of the ``base`` envelope under other kinds."""
    pool = list(candidates)
    base_profile = build_ncp(graph, pool, base)
    witness_ids = {point.witness_id for point in base_profile.points.values()}
    witnesses = [candidate for candidate in pool if candidate.cluster_id in witness_ids]
    return {kind: build_ncp(graph, witnesses, kind) for kind in (kinds or ScoreKind)}


@dataclass(frozen=True)
class ProfileShape:
    best_k: int
    best_value: float
    largest_k: int
    value_at_largest_k: float

    @property
    def ratio(self) -> float:
        """How far the curve climbs back from its best point (``inf`` when the best is 0)."""
        if self.best_value == 0:
            return math.inf
        return self.value_at_largest_k / self.best_value


def profile_shape(profile: NcpProfile) -> ProfileShape:
    if not profile.points:
        raise DegenerateClusterError("empty profile has no shape")
    envelope = profile.envelope
    pick = max if profile.kind.orientation is Orientation.HIGHER else min
    best_k = pick(envelope, key=lambda k: (envelope[k], k) if pick is min else (envelope[k], -k))
    largest_k = max(envelope)
    return ProfileShape(
        best_k=best_k,
        best_value=envelope[best_k],
        largest_k=largest_k,
        value_at_largest_k=envelope[largest_k],
    )
