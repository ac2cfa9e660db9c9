import math
from enum import Enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

import numpy as np
from scipy.sparse.csgraph import shortest_path
from scipy.stats import spearmanr

from utils.logger import LOGGER
from .errors import CommunityError, DegenerateClusterError, DisconnectedGraphError, IsolatedNodeError
from .graph import Cluster, Graph, cluster_stats, component_count, induced_subgraph, inside_degrees


class Orientation(str, Enum):
    LOWER = "lower"
    HIGHER = "higher"
    DESCRIPTIVE = "descriptive"


class ScoreKind(str, Enum):
    CONDUCTANCE = "Conductance"
    EXPANSION = "Expansion"
    INTERNAL_DENSITY = "InternalDensity"
    CUT_RATIO = "CutRatio"
    NORMALIZED_CUT = "NormalizedCut"
    MAX_ODF = "MaxODF"
    AVG_ODF = "AvgODF"
    FLAKE_ODF = "FlakeODF"
    MODULARITY = "Modularity"
    MODULARITY_RATIO = "ModularityRatio"
    VOLUME = "Volume"
    EDGES_CUT = "EdgesCut"

    @property
    def orientation(self) -> Orientation:
        if self in (ScoreKind.MODULARITY, ScoreKind.MODULARITY_RATIO):
            return Orientation.HIGHER
        if self is ScoreKind.VOLUME:
            return Orientation.DESCRIPTIVE
        return Orientation.LOWER

    @property
    def boundary_symmetric(self) -> bool:
        """f(S) == f(V \\ S) for every S."""
        return self in (ScoreKind.CONDUCTANCE, ScoreKind.CUT_RATIO, ScoreKind.EDGES_CUT, ScoreKind.NORMALIZED_CUT)

    @property
    def uses_odf(self) -> bool:
        return self in (ScoreKind.MAX_ODF, ScoreKind.AVG_ODF, ScoreKind.FLAKE_ODF)

    def better(self, candidate: float, incumbent: float) -> bool:
        """Strict improvement under this kind's orientation."""
        if self.orientation is Orientation.HIGHER:
            return candidate > incumbent
        return candidate < incumbent

    @classmethod
    def parse(cls, name: str) -> "ScoreKind":
        wanted = name.strip().replace("-", "").replace("_", "").lower()
        for kind in cls:
            if kind.value.lower() == wanted or kind.name.replace("_", "").lower() == wanted:
                return kind
        raise CommunityError(f"unknown score kind {name!r}; choose from {[kind.value for kind in cls]}")


@dataclass(frozen=True)
class ScoreValue:
    kind: ScoreKind
    value: float
    applicable: bool = True
    reason: str = ""


class GeneratorTag(str, Enum):
    LOCAL_SPECTRAL = "local-spectral"
    MQI = "mqi"
    GLOBAL_SPECTRAL = "global-spectral"
    DENDROGRAM = "dendrogram"
    ORACLE = "oracle"
    SPLIT_CHILD = "split-child"


@dataclass(eq=False)
class ScoredCluster:
    """A candidate cluster with its provenance and lazily cached scores."""

    cluster: Cluster
    generator: GeneratorTag
    connected: bool
    params: dict[str, Any] = field(default_factory=dict)
    cluster_id: Optional[int] = None
    scores: dict[ScoreKind, float] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.cluster.n_s

    def value(self, graph: Graph, kind: ScoreKind) -> float:
        """Score under ``kind``; NaN when the kind is undefined for this cluster."""
        if kind not in self.scores:
            try:
                self.scores[kind] = score(graph, self.cluster, kind).value
            except (DegenerateClusterError, IsolatedNodeError):
                self.scores[kind] = math.nan
        return self.scores[kind]


def formula(
    kind: ScoreKind,
    *,
    n: int,
    m: int,
    n_s,
    m_s,
    c_s,
    vol_s,
    max_odf=None,
    avg_odf=None,
    flake_odf=None,
) -> np.ndarray:
    """
    Closed-form value of ``kind`` from cluster statistics, elementwise.

    Accepts scalars or equally shaped arrays. Entries where the kind is
    undefined come back as NaN. ODF kinds take their aggregated fractions
    precomputed.
    """
    n_s = np.asarray(n_s, dtype=np.float64)
    m_s = np.asarray(m_s, dtype=np.float64)
    c_s = np.asarray(c_s, dtype=np.float64)
    vol_s = np.asarray(vol_s, dtype=np.float64)
    total = 2.0 * m
    co_volume = total - vol_s
    boundary_degenerate = (n_s == 0) | (n_s == n)

    with np.errstate(divide="ignore", invalid="ignore"):
        if kind is ScoreKind.CONDUCTANCE:
            denominator = np.minimum(vol_s, co_volume)
            value = c_s / denominator
            invalid = boundary_degenerate | (denominator <= 0)
        elif kind is ScoreKind.EXPANSION:
            value = c_s / n_s
            invalid = n_s == 0
        elif kind is ScoreKind.INTERNAL_DENSITY:
            pairs = n_s * (n_s - 1.0) / 2.0
            value = np.where(n_s == 1, 1.0, 1.0 - m_s / pairs)
            invalid = n_s == 0
        elif kind is ScoreKind.CUT_RATIO:
            value = c_s / (n_s * (n - n_s))
            invalid = boundary_degenerate
        elif kind is ScoreKind.NORMALIZED_CUT:
            value = c_s / vol_s + c_s / co_volume
            invalid = boundary_degenerate | (vol_s <= 0) | (co_volume <= 0)
        elif kind.uses_odf:
            aggregate = {ScoreKind.MAX_ODF: max_odf, ScoreKind.AVG_ODF: avg_odf, ScoreKind.FLAKE_ODF: flake_odf}[kind]
            if aggregate is None:
                raise ValueError(f"{kind.value} needs out-degree fractions")
            value = np.asarray(aggregate, dtype=np.float64)
            invalid = n_s == 0
        elif kind is ScoreKind.MODULARITY:
            expected = vol_s * vol_s / (4.0 * m)
            value = (m_s - expected) / (4.0 * m)
            invalid = np.full(n_s.shape, m == 0)
        elif kind is ScoreKind.MODULARITY_RATIO:
            expected = vol_s * vol_s / (4.0 * m)
            value = m_s / expected
            invalid = (m == 0) | (expected <= 0)
        elif kind is ScoreKind.VOLUME:
            value = vol_s
            invalid = np.zeros(n_s.shape, dtype=bool)
        elif kind is ScoreKind.EDGES_CUT:
            value = c_s
            invalid = np.zeros(n_s.shape, dtype=bool)
        else:
            raise ValueError(f"no formula for {kind}")

    return np.where(invalid, np.nan, value)


def _as_cluster(graph: Graph, cluster: Cluster | Iterable[int]) -> Cluster:
    return cluster if isinstance(cluster, Cluster) else cluster_stats(graph, cluster)


def _odf_counts(graph: Graph, cluster: Cluster) -> tuple[np.ndarray, np.ndarray]:
    degrees = graph.degrees[cluster.members]
    if np.any(degrees == 0):
        isolated = cluster.members[degrees == 0]
        raise IsolatedNodeError(f"out-degree fraction undefined for isolated nodes {isolated[:10].tolist()}")
    inside = inside_degrees(graph, cluster.members, cluster.mask(graph.node_count))
    return inside, degrees


def out_degree_fractions(graph: Graph, cluster: Cluster | Iterable[int]) -> np.ndarray:
    """Fraction of each member's edges that leave the cluster, aligned with ``cluster.members``."""
    cluster = _as_cluster(graph, cluster)
    inside, degrees = _odf_counts(graph, cluster)
    return (degrees - inside) / degrees


def score(graph: Graph, cluster: Cluster | Iterable[int], kind: ScoreKind) -> ScoreValue:
    cluster = _as_cluster(graph, cluster)
    odf: dict[str, float] = {}
    if kind.uses_odf:
        if cluster.n_s == 0:
            raise DegenerateClusterError(f"{kind.value} is undefined for the empty cluster")
        inside, degrees = _odf_counts(graph, cluster)
        fractions = (degrees - inside) / degrees
        odf = {
            "max_odf": float(fractions.max()),
            "avg_odf": float(fractions.mean()),
            "flake_odf": float(np.mean(2 * inside < degrees)),
        }

    value = float(
        formula(
            kind,
            n=graph.node_count,
            m=graph.edge_count,
            n_s=cluster.n_s,
            m_s=cluster.m_s,
            c_s=cluster.c_s,
            vol_s=cluster.vol_s,
            **odf,
        )
    )
    if math.isnan(value):
        raise DegenerateClusterError(f"{kind.value} is undefined for {cluster!r} in a graph with n={graph.node_count}")
    return ScoreValue(kind=kind, value=value)


def score_all(graph: Graph, cluster: Cluster | Iterable[int]) -> list[ScoreValue]:
    """One entry per kind, in enumeration order. Undefined kinds are flagged, not dropped."""
    cluster = _as_cluster(graph, cluster)
    values: list[ScoreValue] = []
    for kind in ScoreKind:
        try:
            values.append(score(graph, cluster, kind))
        except (DegenerateClusterError, IsolatedNodeError) as e:
            values.append(ScoreValue(kind=kind, value=math.nan, applicable=False, reason=str(e)))
    return values


def _pairs_from_linear(index: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Map row-major upper-triangle positions to ``(i, j)`` with ``i < j < k``."""
    width = 2 * k - 1
    rows = np.floor((width - np.sqrt(width * width - 8.0 * index)) / 2.0).astype(np.int64)

    def offset(i: np.ndarray) -> np.ndarray:
        return i * k - i * (i + 1) // 2

    # float rounding can leave rows off by one in either direction
    rows = np.where(offset(rows) > index, rows - 1, rows)
    rows = np.where(offset(rows + 1) <= index, rows + 1, rows)
    cols = index - offset(rows) + rows + 1
    return rows, cols


def avg_shortest_path(
    graph: Graph,
    cluster: Cluster | Iterable[int],
    sample_pairs: int = 2000,
    seed: int = 0,
    chunk_size: int = 64,
) -> float:
    """
    Mean hop distance between distinct member pairs inside the induced subgraph.

    All pairs are used when there are at most ``sample_pairs`` of them;
    otherwise ``sample_pairs`` unordered pairs are drawn uniformly without
    replacement.

    Args:
        graph: The host graph.
        cluster: A cluster whose induced subgraph is connected.
        sample_pairs: Pair budget.
        seed: Seed for the pair sample.
        chunk_size: BFS sources solved per batch.

    Returns:
        float: The average shortest-path length.
    """
    if sample_pairs < 1:
        raise ValueError("sample_pairs must be at least 1")
    cluster = _as_cluster(graph, cluster)
    if cluster.n_s < 2:
        raise DegenerateClusterError("average path length needs at least two members")
    sub = induced_subgraph(graph, cluster)
    if component_count(sub) != 1:
        raise DisconnectedGraphError("cluster is internally disconnected; split it first")

    k = cluster.n_s
    total = k * (k - 1) // 2
    if total <= sample_pairs:
        distances = shortest_path(sub.adjacency, directed=False, unweighted=True)
        upper = np.triu_indices(k, 1)
        return float(distances[upper].mean())

    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(total, size=sample_pairs, replace=False))
    rows, cols = _pairs_from_linear(picks, k)

    sources = np.unique(rows)
    lengths = np.empty(rows.size, dtype=np.float64)
    for start in range(0, sources.size, chunk_size):
        chunk = sources[start:start + chunk_size]
        distances = shortest_path(sub.adjacency, directed=False, unweighted=True, indices=chunk)
        selected = (rows >= chunk[0]) & (rows <= chunk[-1])
        lengths[selected] = distances[np.searchsorted(chunk, rows[selected]), cols[selected]]
    return float(lengths.mean())


def score_correlations(
    graph: Graph,
    clusters: Iterable[ScoredCluster | Cluster],
    base: ScoreKind = ScoreKind.CONDUCTANCE,
    kinds: Optional[Iterable[ScoreKind]] = None,
    min_size: int = 2,
    max_size: Optional[int] = None,
) -> dict[ScoreKind, float]:
    """
    Spearman rank correlation of each kind against ``base`` over a candidate pool.

    The pool is reduced to distinct clusters with ``min_size <= |S| <= max_size``
    (``n // 2`` by default, the size domain of a profile). Past half the graph
    the size-normalized and the volume-normalized kinds look at different sides.
    """
    max_size = graph.node_count // 2 if max_size is None else max_size
    distinct: dict[bytes, ScoredCluster] = {}
    for item in clusters:
        if not isinstance(item, ScoredCluster):
            item = ScoredCluster(cluster=item, generator=GeneratorTag.ORACLE, connected=True)
        if min_size <= item.size <= max_size:
            distinct.setdefault(item.cluster.key, item)
    pool = list(distinct.values())
    kinds = [kind for kind in (kinds or ScoreKind) if kind is not base]
    base_values = np.array([item.value(graph, base) for item in pool], dtype=np.float64)

    correlations: dict[ScoreKind, float] = {}
    for kind in kinds:
        values = np.array([item.value(graph, kind) for item in pool], dtype=np.float64)
        usable = np.isfinite(base_values) & np.isfinite(values)
        x, y = base_values[usable], values[usable]
        if x.size < 3 or np.ptp(x) == 0 or np.ptp(y) == 0:
            correlations[kind] = math.nan
            continue
        correlations[kind] = float(spearmanr(x, y)[0])
    LOGGER.debug(f"Score correlations against {base.value} over {len(pool)} clusters computed")
    return correlations
