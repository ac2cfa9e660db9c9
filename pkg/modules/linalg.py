from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from utils.logger import LOGGER
from .errors import ConvergenceError, DegenerateClusterError, DisconnectedGraphError
from .graph import Graph, component_count

LANCZOS_MIN_NODES = 16


@dataclass(frozen=True)
class EigenPair:
    """Second generalized eigenpair of ``L x = lambda D x``."""

    value: float
    vector: np.ndarray
    residual: float
    method: str


def _start_vector(n: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(n)


def normalized_adjacency(graph: Graph) -> sp.csr_matrix:
    inv_sqrt = 1.0 / np.sqrt(graph.degrees.astype(np.float64))
    scaling = sp.diags(inv_sqrt)
    return sp.csr_matrix(scaling @ graph.adjacency @ scaling)


def _finish(graph: Graph, x: np.ndarray, method: str) -> EigenPair:
    d = graph.degrees.astype(np.float64)
    # remove the trivial direction in the D inner product, i.e. enforce x . d = 0
    x = x - (x @ d) / d.sum()
    x = x / np.linalg.norm(x)
    pivot = int(np.argmax(np.abs(x) > 1e-12 * np.abs(x).max()))
    if x[pivot] < 0:
        x = -x
    lx = graph.laplacian @ x
    dx = d * x
    value = float(x @ lx) / float(x @ dx)
    residual = float(np.linalg.norm(lx - value * dx) / np.linalg.norm(dx))
    return EigenPair(value=value, vector=x, residual=residual, method=method)


def _dense_pair(graph: Graph) -> EigenPair:
    inv_sqrt = 1.0 / np.sqrt(graph.degrees.astype(np.float64))
    normalized = np.eye(graph.node_count) - normalized_adjacency(graph).toarray()
    _, vectors = la.eigh(normalized, subset_by_index=[1, 1])
    return _finish(graph, vectors[:, 0] * inv_sqrt, "dense")


def _lanczos_pair(graph: Graph, seed: int = 0) -> EigenPair:
    n = graph.node_count
    d = graph.degrees.astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(d)
    z = np.sqrt(d) / np.linalg.norm(np.sqrt(d))
    a_hat = normalized_adjacency(graph)

    # I + N_adj has the trivial eigenvector z at the top of its spectrum; deflate it
    # so the largest remaining eigenvalue is 2 - lambda_2
    def matvec(y: np.ndarray) -> np.ndarray:
        y = np.ravel(y)
        return y + a_hat @ y - 2.0 * z * (z @ y)

    operator = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    try:
        _, vectors = eigsh(operator, k=1, which="LA", tol=0, v0=_start_vector(n, seed), maxiter=max(1000, 20 * n))
    except ArpackNoConvergence as e:
        if e.eigenvectors is None or e.eigenvectors.shape[1] == 0:
            raise ConvergenceError("Lanczos iteration for the Fiedler pair did not converge") from e
        LOGGER.warning("Lanczos iteration stopped early; using the partial Ritz vector")
        vectors = e.eigenvectors
    return _finish(graph, vectors[:, 0] * inv_sqrt, "lanczos")


def fiedler_pair(graph: Graph, tolerance: float = 1e-8, dense_limit: int = 200, seed: int = 0) -> EigenPair:
    """
    Minimize ``x'Lx / x'Dx`` over ``x`` orthogonal to the degree vector.

    Graphs above ``LANCZOS_MIN_NODES`` nodes are solved with restarted
    Lanczos on the degree-normalized operator deflated against ``D^1/2 1``;
    graphs up to ``dense_limit`` nodes are also solved densely and the two
    answers cross-checked. The pair with the smaller residual is returned.
    """
    n = graph.node_count
    if n < 2:
        raise DegenerateClusterError("a Fiedler vector needs at least two nodes")
    if np.any(graph.degrees == 0) or component_count(graph) != 1:
        raise DisconnectedGraphError("the Fiedler vector is defined for connected graphs only")

    candidates: list[EigenPair] = []
    if n > LANCZOS_MIN_NODES:
        candidates.append(_lanczos_pair(graph, seed))
    if n <= dense_limit or not candidates or candidates[0].residual > tolerance:
        if n > dense_limit:
            LOGGER.warning(f"Lanczos residual {candidates[0].residual:.2e} above {tolerance:.0e}; falling back to a dense solve")
        candidates.append(_dense_pair(graph))

    if len(candidates) == 2 and abs(candidates[0].value - candidates[1].value) > tolerance * max(1.0, candidates[1].value):
        LOGGER.warning(
            f"Eigenvalue cross-check disagrees: lanczos={candidates[0].value:.12f} dense={candidates[1].value:.12f}"
        )
    best = min(candidates, key=lambda pair: pair.residual)
    LOGGER.debug(f"Fiedler pair via {best.method}: lambda={best.value:.10f} residual={best.residual:.2e}")
    return best


def min_eigenvalue(
    operator: np.ndarray | LinearOperator,
    dense_limit: int = 64,
    seed: int = 0,
) -> float:
    """
    Lower estimate of the smallest eigenvalue of a symmetric operator.

    Small dense matrices use a direct symmetric solve. Otherwise Lanczos
    (``eigsh`` in ``SA`` mode, no factorization) gives a Ritz pair
    ``(theta, v)`` and the estimate is ``theta - ||M v - theta v||``.
    """
    n = operator.shape[0]
    if isinstance(operator, np.ndarray) and (n <= dense_limit or n < 3):
        return float(la.eigvalsh(operator, subset_by_index=[0, 0])[0])
    if n < 3:
        return float(la.eigvalsh(_materialize(operator), subset_by_index=[0, 0])[0])

    try:
        values, vectors = eigsh(operator, k=1, which="SA", tol=0, v0=_start_vector(n, seed), maxiter=max(2000, 50 * n))
    except ArpackNoConvergence as e:
        if isinstance(operator, np.ndarray):
            LOGGER.warning("Lanczos did not converge for the smallest eigenvalue; using a dense solve")
            return float(la.eigvalsh(operator, subset_by_index=[0, 0])[0])
        raise ConvergenceError("Lanczos did not converge for the smallest eigenvalue") from e
    theta = float(values[0])
    v = vectors[:, 0]
    residual = float(np.linalg.norm(operator @ v - theta * v))
    return theta - residual


def _materialize(operator: LinearOperator) -> np.ndarray:
    return operator @ np.eye(operator.shape[0])


def laplacian_norm(graph: Graph, dense_limit: int = 200) -> float:
    """Spectral norm of L (its largest eigenvalue)."""
    n = graph.node_count
    if graph.edge_count == 0:
        return 0.0
    if n <= dense_limit:
        return float(la.eigvalsh(graph.laplacian.toarray(), subset_by_index=[n - 1, n - 1])[0])
    values = eigsh(graph.laplacian, k=1, which="LA", tol=1e-10, return_eigenvectors=False, v0=_start_vector(n))
    return float(values[0])
