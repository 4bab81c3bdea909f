"""
Levenberg-Marquardt optimiser for PoseGraph.

Parameters are the additive (x, y, theta) of every free pose and (x, y) of
every landmark; headings are re-normalised after each step. The damped
normal equations (H + lambda*I) dx = -g are assembled sparse, in edge order,
and factorised with SuperLU under a COLAMD ordering.
"""

import logging
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from errors import GaugeError, SolverError
from geometry import Point2, Pose2
from pose_graph import PRIOR_EDGE_TYPES, PoseGraph, VertexId, linearize, residual

logger = logging.getLogger(__name__)


class OptimizerConfig(BaseModel):
    """Stopping rule and damping schedule."""

    max_iter: int = Field(100, ge=1)
    chi2_rel_tol: float = Field(1e-9, ge=0.0)
    lm_initial_lambda: float = Field(1e-4, gt=0.0)
    lm_lambda_max: float = Field(1e10, gt=0.0)


class Termination(str, Enum):
    TOLERANCE = "tolerance"
    MAX_ITER = "max_iter"
    LM_STALL = "lm_stall"


class OptimizeReport(BaseModel):
    iterations: int
    initial_chi2: float
    final_chi2: float
    converged: bool
    termination: Termination
    chi2_history: List[float] = []


def check_gauge(graph: PoseGraph) -> None:
    """Reject graphs whose global transform is not observable.

    Every connected component must contain a fixed pose or a vertex with a
    prior edge.
    """
    ids = graph.pose_ids() + graph.landmark_ids()
    if not graph.fixed_ids() and not graph.has_priors():
        raise GaugeError("graph has no fixed vertex and no prior edge; the global frame is unobservable")
    if not ids:
        return

    position = {vid: i for i, vid in enumerate(ids)}
    constrained = np.zeros(len(ids), dtype=bool)
    for vid in graph.fixed_ids():
        constrained[position[vid]] = True
    rows: List[int] = []
    cols: List[int] = []
    for edge in graph.iter_edges():
        if isinstance(edge, PRIOR_EDGE_TYPES):
            constrained[position[edge.vertices[0]]] = True
        else:
            a, b = edge.vertices
            rows.append(position[a])
            cols.append(position[b])

    adjacency = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(ids), len(ids)))
    n_components, labels = connected_components(adjacency, directed=False)
    anchored = np.zeros(n_components, dtype=bool)
    anchored[labels[constrained]] = True
    for component in range(n_components):
        if not anchored[component]:
            first = ids[int(np.flatnonzero(labels == component)[0])]
            raise GaugeError(
                f"vertex {first} belongs to a component with no fixed vertex and no prior edge",
                vertex_id=first,
            )


def _index_free_vertices(graph: PoseGraph) -> Tuple[Dict[VertexId, Tuple[int, int]], int]:
    index: Dict[VertexId, Tuple[int, int]] = {}
    offset = 0
    for vertex in graph.poses():
        if not vertex.fixed:
            index[vertex.id] = (offset, 3)
            offset += 3
    for vertex in graph.landmarks():
        index[vertex.id] = (offset, 2)
        offset += 2
    return index, offset


def _build_normal_equations(graph: PoseGraph, index: Dict[VertexId, Tuple[int, int]],
                            n: int) -> Tuple[sp.csc_matrix, np.ndarray, float]:
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []
    gradient = np.zeros(n)
    chi2 = 0.0

    for edge in graph.iter_edges():
        r = residual(edge, graph)
        omega = edge.info
        weighted = omega @ r
        chi2 += float(r @ weighted)
        blocks = [(index[vid], jac) for vid, jac in linearize(edge, graph).items() if vid in index]
        for (off_i, size_i), j_i in blocks:
            gradient[off_i:off_i + size_i] += j_i.T @ weighted
            j_i_omega = j_i.T @ omega
            for (off_j, size_j), j_j in blocks:
                block = j_i_omega @ j_j
                rows.append(np.repeat(np.arange(off_i, off_i + size_i), size_j))
                cols.append(np.tile(np.arange(off_j, off_j + size_j), size_i))
                vals.append(block.ravel())

    if rows:
        hessian = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsc()
    else:
        hessian = sp.csc_matrix((n, n))
    return hessian, gradient, chi2


def _solve_damped(hessian: sp.csc_matrix, gradient: np.ndarray, lam: float) -> Optional[np.ndarray]:
    damped = (hessian + lam * sp.identity(hessian.shape[0], format="csc")).tocsc()
    try:
        delta = splu(damped, permc_spec="COLAMD").solve(-gradient)
    except RuntimeError:
        return None
    if not np.all(np.isfinite(delta)):
        return None
    return delta


def _apply_step(graph: PoseGraph, index: Dict[VertexId, Tuple[int, int]], delta: np.ndarray) -> None:
    for vid, (offset, size) in index.items():
        step = delta[offset:offset + size]
        current = graph.vertex_estimate(vid)
        if size == 3:
            graph.set_estimate(vid, Pose2(current.x + step[0], current.y + step[1], current.theta + step[2]))
        else:
            graph.set_estimate(vid, Point2(current.x + step[0], current.y + step[1]))


def optimize(graph: PoseGraph, config: Optional[OptimizerConfig] = None) -> OptimizeReport:
    """Minimise total chi2 in place and report how the run ended."""
    config = config or OptimizerConfig()
    check_gauge(graph)

    index, n = _index_free_vertices(graph)
    chi2 = graph.chi2()
    initial_chi2 = chi2
    history = [chi2]
    lam = config.lm_initial_lambda
    termination = Termination.MAX_ITER
    iterations = 0

    if n == 0:
        logger.info("No free vertices; nothing to optimise")
        return OptimizeReport(iterations=0, initial_chi2=chi2, final_chi2=chi2, converged=True,
                              termination=Termination.TOLERANCE, chi2_history=history)

    for _ in range(config.max_iter):
        hessian, gradient, chi2 = _build_normal_equations(graph, index, n)
        if not (np.all(np.isfinite(gradient)) and np.all(np.isfinite(hessian.data))):
            raise SolverError("normal equations contain non-finite values")
        if chi2 == 0.0 or not np.any(gradient):
            termination = Termination.TOLERANCE
            break
        iterations += 1

        accepted = False
        factored = False
        new_chi2 = chi2
        while lam <= config.lm_lambda_max:
            delta = _solve_damped(hessian, gradient, lam)
            if delta is not None:
                factored = True
                snapshot = {vid: graph.vertex_estimate(vid) for vid in index}
                _apply_step(graph, index, delta)
                new_chi2 = graph.chi2()
                if new_chi2 < chi2:
                    accepted = True
                    lam /= 10.0
                    break
                for vid, estimate in snapshot.items():
                    graph.set_estimate(vid, estimate)
            lam *= 10.0

        if not accepted:
            if not factored:
                diag = hessian.diagonal()
                raise SolverError(
                    f"damped normal equations could not be factorised up to lambda={config.lm_lambda_max:g} "
                    f"({n} parameters, min diagonal {diag.min():.3g})"
                )
            termination = Termination.LM_STALL
            break

        relative_decrease = (chi2 - new_chi2) / chi2
        logger.debug(f"LM iteration {iterations}: chi2 {chi2:.6g} -> {new_chi2:.6g}, lambda {lam:.1e}")
        chi2 = new_chi2
        history.append(chi2)
        if relative_decrease < config.chi2_rel_tol:
            termination = Termination.TOLERANCE
            break

    final_chi2 = graph.chi2()
    report = OptimizeReport(
        iterations=iterations,
        initial_chi2=initial_chi2,
        final_chi2=final_chi2,
        converged=termination != Termination.MAX_ITER,
        termination=termination,
        chi2_history=history,
    )
    logger.info(
        f"Optimised {len(graph)} vertices / {len(graph.edges)} edges: chi2 {initial_chi2:.6g} -> "
        f"{final_chi2:.6g} in {iterations} iterations ({termination.value})"
    )
    return report
