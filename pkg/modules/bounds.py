import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
from scipy.sparse.linalg import LinearOperator

from config import BoundsSettings
from utils.logger import LOGGER
from .errors import CommunityError, DegenerateClusterError, DisconnectedGraphError
from .graph import Graph, components
from .linalg import fiedler_pair, laplacian_norm, min_eigenvalue


@dataclass
class SpectralCertificate:
    lambda_g: float
    x_hat: np.ndarray
    residual: float
    connected: bool = True
    method: str = "dense"

    @property
    def bound_any_size(self) -> float:
        return self.lambda_g / 2.0


@dataclass
class DualCheck:
    passed: bool
    min_eigenvalue: float
    threshold: float


@dataclass
class SdpCertificate:
    """
    Low-rank primal embedding plus a certified dual point for the balanced-cut SDP.

    ``dual_value`` is the number to report: weak duality makes it a lower
    bound on the SDP optimum whatever the quality of the embedding.
    """

    primal_value: float
    embedding: np.ndarray
    dual_value: float
    u: np.ndarray
    v: float
    bound_at_half_volume: float
    min_eig_slack: float
    check: DualCheck
    converged: bool
    rank: int
    sweeps: int

    @property
    def duality_gap(self) -> float:
        return self.primal_value - self.dual_value

    @property
    def certified(self) -> bool:
        return self.check.passed


@dataclass
class BoundsReport:
    network: str
    spectral: SpectralCertificate
    sdp: Optional[SdpCertificate] = None
    notes: list[str] = field(default_factory=list)

    @property
    def spectral_bound(self) -> float:
        return self.spectral.bound_any_size

    @property
    def sdp_bound(self) -> Optional[float]:
        return None if self.sdp is None else self.sdp.bound_at_half_volume

    @property
    def ratio(self) -> Optional[float]:
        if self.sdp is None:
            return None
        if self.spectral_bound <= 0:
            return math.inf if self.sdp_bound > 0 else math.nan
        return self.sdp_bound / self.spectral_bound

    @property
    def certified(self) -> bool:
        spectral_ok = not self.spectral.connected or self.spectral.residual <= 1e-8
        sdp_ok = self.sdp is None or (self.sdp.certified and self.sdp.converged)
        return spectral_ok and sdp_ok

    def to_row(self) -> dict[str, str]:
        def fmt(value: Optional[float]) -> str:
            return "" if value is None else f"{value:.6f}"

        return {
            "network": self.network,
            "spectral_lb": fmt(self.spectral_bound),
            "sdp_lb_half_volume": fmt(self.sdp_bound),
            "ratio": fmt(self.ratio),
            "certified": "yes" if self.certified else "flagged",
        }


def spectral_lower_bound(graph: Graph, settings: Optional[BoundsSettings] = None) -> SpectralCertificate:
    """
    Second eigenvalue of ``L x = lambda D x`` with ``x`` orthogonal to ``d``.

    Half of it lower-bounds the conductance of every cut. Disconnected graphs
    get ``lambda = 0`` with an indicator-difference witness and
    ``connected=False``.
    """
    settings = settings or BoundsSettings()
    n = graph.node_count
    parts = components(graph)
    if n < 2 or len(parts) > 1:
        LOGGER.warning(f"Graph has {len(parts)} components; spectral bound is 0")
        return SpectralCertificate(
            lambda_g=0.0, x_hat=_split_witness(graph, parts), residual=0.0, connected=False, method="components"
        )

    pair = fiedler_pair(graph, tolerance=settings.tolerance, dense_limit=settings.dense_limit)
    if pair.residual > settings.tolerance:
        LOGGER.warning(f"Eigen-residual {pair.residual:.2e} exceeds {settings.tolerance:.0e}")
    return SpectralCertificate(lambda_g=pair.value, x_hat=pair.vector, residual=pair.residual, method=pair.method)


def _split_witness(graph: Graph, parts: list[np.ndarray]) -> np.ndarray:
    x = np.zeros(graph.node_count)
    if graph.node_count < 2:
        return x
    degrees = graph.degrees
    first, rest = parts[0], np.concatenate(parts[1:])
    first_volume, rest_volume = degrees[first].sum(), degrees[rest].sum()
    if first_volume > 0 and rest_volume > 0:
        x[first] = 1.0 / first_volume
        x[rest] = -1.0 / rest_volume
    else:
        # an isolated node is orthogonal to d on its own
        x[int(np.flatnonzero(degrees == 0)[0])] = 1.0
    return x / np.linalg.norm(x)


def default_rank(node_count: int, rank_cap: int = 32) -> int:
    return max(2, min(math.ceil(math.sqrt(2 * node_count)), rank_cap, node_count))


class _AugmentedMixing:
    """
    Row-wise coordinate descent on the augmented Lagrangian

        F(R) = tr(L R R') / 4 + lambda' R'd + (rho / 2) ||R'd||^2

    over unit rows. Each step sets ``r_i = -c_i / ||c_i||`` where ``c_i`` is
    the part of the gradient that depends on the other rows, which never
    increases ``F``. Between stages ``lambda`` takes the usual multiplier step
    ``lambda += rho R'd`` so ``R'd`` goes to 0 without an unbounded penalty.
    """

    def __init__(self, graph: Graph, embedding: np.ndarray, rho: float):
        self.graph = graph
        self.degrees = graph.degrees.astype(np.float64)
        self.neighbors = [graph.neighbors(u) for u in range(graph.node_count)]
        self.embedding = embedding
        self.multiplier = np.zeros(embedding.shape[1])
        self.rho = rho

    def violation(self) -> float:
        return float(np.linalg.norm(self.embedding.T @ self.degrees))

    def objective(self) -> float:
        r = self.embedding
        s = r.T @ self.degrees
        inner = float(np.sum((self.graph.adjacency @ r) * r))
        return 0.25 * (float(self.degrees.sum()) - inner) + float(self.multiplier @ s) + 0.5 * self.rho * float(s @ s)

    def sweep(self) -> None:
        r, d = self.embedding, self.degrees
        s = r.T @ d
        for i in range(r.shape[0]):
            s -= d[i] * r[i]
            c = d[i] * (self.multiplier + self.rho * s) - 0.5 * r[self.neighbors[i]].sum(axis=0)
            norm = math.sqrt(float(c @ c))
            if norm > 0.0:
                r[i] = -c / norm
            s += d[i] * r[i]

    def run(self, max_sweeps: int, tolerance: float) -> tuple[int, bool]:
        previous = self.objective()
        for sweep in range(1, max_sweeps + 1):
            self.sweep()
            current = self.objective()
            if previous - current <= tolerance * max(1.0, abs(current)):
                return sweep, True
            previous = current
        return max_sweeps, False

    def update_multiplier(self) -> None:
        self.multiplier = self.multiplier + self.rho * (self.embedding.T @ self.degrees)

    def duals(self) -> np.ndarray:
        """
        Multipliers of the unit-row constraints at the current embedding,
        ``u_i = (L R R')_ii / 4 + d_i r_i . (lambda + rho R'd) / 2``.
        """
        r, d = self.embedding, self.degrees
        effective = self.multiplier + self.rho * (r.T @ d)
        return row_multipliers(self.graph, r) + 0.5 * d * (r @ effective)


def row_multipliers(graph: Graph, embedding: np.ndarray) -> np.ndarray:
    """``diag(L R R') / 4``; its sum is the primal objective."""
    d = graph.degrees.astype(np.float64)
    row_inner = np.sum((graph.adjacency @ embedding) * embedding, axis=1)
    return 0.25 * (d * np.sum(embedding * embedding, axis=1) - row_inner)


def _random_embedding(n: int, rank: int, seed: int) -> np.ndarray:
    rows = np.random.default_rng(seed).standard_normal((n, rank))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _pad(warm_start: np.ndarray, n: int, rank: int) -> np.ndarray:
    if warm_start.shape[0] != n or warm_start.shape[1] > rank:
        raise CommunityError(f"warm start of shape {warm_start.shape} does not fit n={n}, rank={rank}")
    padded = np.zeros((n, rank))
    padded[:, :warm_start.shape[1]] = warm_start
    return padded


def project_embedding(embedding: np.ndarray, degrees: np.ndarray, tolerance: float, max_rounds: int = 500) -> np.ndarray:
    """Alternate between ``R'd = 0`` and unit rows until both hold to ``tolerance``."""
    r = embedding.copy()
    d_norm = float(np.linalg.norm(degrees))
    d_squared = d_norm * d_norm
    for _ in range(max_rounds):
        s = r.T @ degrees
        rows = np.linalg.norm(r, axis=1)
        if np.linalg.norm(s) <= tolerance * d_norm and np.max(np.abs(rows - 1.0)) <= tolerance:
            break
        r -= np.outer(degrees, s) / d_squared
        r /= np.linalg.norm(r, axis=1, keepdims=True)
    else:
        LOGGER.warning("Embedding projection hit its round limit")
    return r


def embedding_objective(graph: Graph, embedding: np.ndarray) -> float:
    return 0.25 * float(np.sum((graph.laplacian @ embedding) * embedding))


def dual_operator(graph: Graph, u: np.ndarray, v: float, dense: bool):
    """``M = L/4 - Diag(u) - v d d'`` as a dense matrix or a matrix-free operator."""
    d = graph.degrees.astype(np.float64)
    if dense:
        return graph.laplacian.toarray() / 4.0 - np.diag(u) - v * np.outer(d, d)

    laplacian = graph.laplacian

    def matvec(x: np.ndarray) -> np.ndarray:
        x = np.ravel(x)
        return laplacian @ x / 4.0 - u * x - v * d * (d @ x)

    n = graph.node_count
    return LinearOperator((n, n), matvec=matvec, dtype=np.float64)


def check_dual_certificate(
    graph: Graph,
    u: np.ndarray,
    v: float,
    tolerance: float = 1e-8,
    dense_limit: int = 64,
    norm: Optional[float] = None,
) -> DualCheck:
    """
    Recompute ``lambda_min(L/4 - Diag(u) - v d d')`` from scratch and compare it
    with ``-tolerance * ||L||``. Needs nothing from the solver but ``(u, v)``.
    """
    n = graph.node_count
    norm = laplacian_norm(graph) if norm is None else norm
    operator = dual_operator(graph, u, v, dense=n <= dense_limit)
    smallest = min_eigenvalue(operator, dense_limit=dense_limit, seed=1)
    threshold = -tolerance * norm
    return DualCheck(passed=smallest >= threshold, min_eigenvalue=smallest, threshold=threshold)


def _schur_duals(graph: Graph, u: np.ndarray, norm: float, exponents=range(10, 1, -1)):
    """
    Dual points ``(u', v)`` built from ``u``, tightest first.

    With ``Q`` an orthonormal basis of ``d``'s complement and
    ``sigma = lambda_min(Q' (L/4 - Diag(u)) Q)``, the shift
    ``u' = u + sigma - delta`` leaves ``delta`` of slack on the complement,
    and a Schur complement argument gives the ``v`` that makes ``M``
    positive semidefinite along ``d`` as well. The dual value is
    ``sum(u) + n (sigma - delta)``.
    """
    n = graph.node_count
    d = graph.degrees.astype(np.float64)
    d_norm = float(np.linalg.norm(d))
    d_hat = d / d_norm
    basis = la.null_space(d_hat[None, :])
    a = graph.laplacian.toarray() / 4.0 - np.diag(u)
    sigma = float(la.eigvalsh(basis.T @ a @ basis, subset_by_index=[0, 0])[0])
    along = a @ d_hat
    coupling = basis.T @ along
    LOGGER.debug(f"Dual slack on the complement of d: {sigma:.3e} over {n} nodes")
    for exponent in exponents:
        delta = norm * 10.0 ** -exponent
        # d_hat' A d_hat after the shift
        corner = float(d_hat @ along) - (sigma - delta)
        t = max(0.0, float(coupling @ coupling) / delta - corner + delta) / (d_norm * d_norm)
        yield u + sigma - delta, -t


def _scanned_duals(graph: Graph, u: np.ndarray, norm: float, tolerance: float, dense_limit: int):
    """Matrix-free fallback: scan ``v`` and shift ``u`` by the smallest eigenvalue of ``M``."""
    d = graph.degrees.astype(np.float64)
    d_squared = float(d @ d)
    for exponent in range(8):
        v = -norm * 10.0 ** exponent / d_squared
        smallest = min_eigenvalue(dual_operator(graph, u, v, dense=False), dense_limit=dense_limit)
        # Lanczos estimates carry their own error; keep clear of the boundary
        yield u + min(0.0, smallest) - 0.1 * tolerance * norm, v


def certify_dual(
    graph: Graph,
    candidates: list[np.ndarray],
    norm: float,
    settings: BoundsSettings,
) -> tuple[np.ndarray, float, DualCheck]:
    """
    Turn approximate unit-row multipliers into the best dual point that passes
    ``check_dual_certificate``. When nothing passes, returns the point closest
    to passing with a failed check.
    """
    n = graph.node_count
    best, fallback = None, None
    for u in candidates:
        if n <= settings.dense_dual_limit:
            points = _schur_duals(graph, u, norm)
        else:
            points = _scanned_duals(graph, u, norm, settings.tolerance, settings.dense_dual_limit)
        for shifted, v in points:
            check = check_dual_certificate(
                graph, shifted, v, tolerance=settings.tolerance, dense_limit=settings.dense_dual_limit, norm=norm
            )
            if check.passed:
                if best is None or shifted.sum() > best[0].sum():
                    best = (shifted, v, check)
                if n <= settings.dense_dual_limit:
                    # later points only loosen the slack
                    break
            elif fallback is None or check.min_eigenvalue > fallback[2].min_eigenvalue:
                fallback = (shifted, v, check)
    return best if best is not None else fallback


def sdp_lower_bound(
    graph: Graph,
    rank: Optional[int] = None,
    iterations: Optional[int] = None,
    settings: Optional[BoundsSettings] = None,
    seed: int = 0,
    warm_start: Optional[np.ndarray] = None,
    allow_disconnected: bool = False,
) -> SdpCertificate:
    """
    Certified lower bound on ``min (1/4) L . Y`` s.t. ``diag(Y) = 1``, ``Y . dd' = 0``, ``Y >= 0``.

    The primal is solved in factored form ``Y = R R'`` by row-wise descent on
    an augmented Lagrangian for ``R'd = 0``, then projected onto the feasible
    set. The unit-row multipliers are read off the embedding, shifted so that
    ``L/4 - Diag(u) - v dd'`` is positive semidefinite for a suitable ``v``,
    and re-checked independently.

    Args:
        graph: A connected graph with at least one edge.
        rank: Columns of ``R``; defaults to ``ceil(sqrt(2n))`` capped by settings.
        iterations: Total sweep budget across all multiplier stages.
        settings: Tolerances and schedule.
        seed: Seed of the random starting embedding.
        warm_start: Embedding to restart from, padded with zero columns to ``rank``.
        allow_disconnected: Skip the connectivity precondition.

    Returns:
        SdpCertificate: Embedding, certified dual and derived half-volume bound.
    """
    settings = settings or BoundsSettings()
    n = graph.node_count
    if n < 2 or graph.edge_count == 0:
        raise DegenerateClusterError("the balanced-cut relaxation needs a graph with edges")
    if not allow_disconnected and len(components(graph)) != 1:
        raise DisconnectedGraphError("sdp_lower_bound expects a connected graph")
    rank = default_rank(n, settings.rank_cap) if rank is None else rank
    if rank < 2:
        raise CommunityError("rank must be at least 2")
    iterations = settings.iterations if iterations is None else iterations

    d = graph.degrees.astype(np.float64)
    d_norm = float(np.linalg.norm(d))
    norm = laplacian_norm(graph, settings.dense_limit)
    # rho d_i^2 is of the order of ||L|| for a typical node
    rho = 2.0 * norm * n / (d_norm * d_norm)

    width = rank
    if warm_start is not None:
        warm_start = np.asarray(warm_start, dtype=np.float64)
        start = _pad(warm_start, n, rank)
        width = warm_start.shape[1]
    else:
        start = _random_embedding(n, rank, seed)
    initial = start.copy()
    if width < rank:
        # zero-padded columns are a fixed point of the row updates
        initial[:, width:] = 1e-3 * _random_embedding(n, rank - width, seed)
        initial /= np.linalg.norm(initial, axis=1, keepdims=True)
    solver = _AugmentedMixing(graph, initial, rho)

    stage_budget = max(25, iterations // settings.multiplier_stages)
    used, converged, previous_violation = 0, False, math.inf
    while used < iterations:
        sweeps, settled = solver.run(min(stage_budget, iterations - used), settings.tolerance * 0.1)
        used += sweeps
        violation = solver.violation()
        LOGGER.debug(
            f"SDP stage rho={solver.rho:.3e}: {sweeps} sweeps, objective={solver.objective():.10f}, |R'd|={violation:.2e}"
        )
        if settled and violation <= settings.tolerance * d_norm:
            converged = True
            break
        solver.update_multiplier()
        if violation > 0.25 * previous_violation and solver.rho < rho * 1e6:
            solver.rho *= 4.0
        previous_violation = violation

    embedding = project_embedding(solver.embedding, d, settings.tolerance)
    primal = embedding_objective(graph, embedding)
    if warm_start is not None:
        restart = project_embedding(start, d, settings.tolerance)
        restart_value = embedding_objective(graph, restart)
        if restart_value < primal:
            embedding, primal = restart, restart_value

    u, v, check = certify_dual(graph, [solver.duals(), row_multipliers(graph, embedding)], norm, settings)
    dual = float(u.sum())
    if not check.passed:
        LOGGER.error(f"Dual certificate failed: lambda_min={check.min_eigenvalue:.3e} < {check.threshold:.3e}")

    gap = primal - dual
    converged = converged and check.passed and gap <= settings.gap_tolerance * max(1.0, abs(primal))
    if not converged:
        LOGGER.warning(f"SDP bound flagged: sweeps={used}, primal={primal:.8f}, dual={dual:.8f}")

    volume = float(graph.total_volume)
    certificate = SdpCertificate(
        primal_value=primal,
        embedding=embedding,
        dual_value=dual,
        u=u,
        v=v,
        bound_at_half_volume=2.0 * dual / volume,
        min_eig_slack=check.min_eigenvalue,
        check=check,
        converged=converged,
        rank=rank,
        sweeps=used,
    )
    LOGGER.info(
        f"SDP bound: C_G in [{dual:.6f}, {primal:.6f}], half-volume conductance bound {certificate.bound_at_half_volume:.6f}"
    )
    return certificate


def bounds_report(
    graph: Graph,
    network: str = "graph",
    with_sdp: bool = True,
    settings: Optional[BoundsSettings] = None,
    seed: int = 0,
) -> BoundsReport:
    """Spectral and SDP bounds side by side, as one report row."""
    settings = settings or BoundsSettings()
    spectral = spectral_lower_bound(graph, settings)
    report = BoundsReport(network=network, spectral=spectral)
    if not spectral.connected:
        report.notes.append("graph is disconnected; spectral bound is 0")
    if with_sdp and graph.edge_count > 0:
        report.sdp = sdp_lower_bound(graph, settings=settings, seed=seed, allow_disconnected=True)
        report.notes.append("sdp bound applies to exactly volume-balanced cuts, which may not exist")
    LOGGER.info(f"Bounds for {network}: {report.to_row()}")
    return report
