"""
Pose graph data model: pose and landmark vertices, the four edge kinds and
their residuals / analytic Jacobians, plus the helpers that attach GPS and
aerial-anchor priors.

Prior edges are unary: the map origin is the implicit global frame rather
than an explicit vertex, which is the same problem as tying every prior to a
fixed origin vertex.
"""

import copy
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import GraphStructureError, InvalidInformationError
from geometry import (
    Point2,
    Pose2,
    normalize_angle,
    rotation_matrix,
    rotation_matrix_transpose_derivative,
)

logger = logging.getLogger(__name__)

VertexId = int

DEFAULT_GPS_SIGMA = 5.0
DEFAULT_GPS_SPACING = 10.0
DEFAULT_ANCHOR_SIGMA = 0.1


class LandmarkKind(str, Enum):
    POLE = "pole"
    BUILDING_CORNER = "building_corner"
    OTHER = "other"


def check_information(info: np.ndarray, size: int) -> np.ndarray:
    """Validate a symmetric positive-definite information matrix."""
    info = np.array(info, dtype=float)
    if info.shape != (size, size):
        raise InvalidInformationError(f"information matrix must be {size}x{size}, got {info.shape}")
    if not np.all(np.isfinite(info)):
        raise InvalidInformationError("information matrix has non-finite entries")
    if np.max(np.abs(info - info.T)) > 1e-12:
        raise InvalidInformationError("information matrix is not symmetric")
    if np.min(np.linalg.eigvalsh(info)) <= 0.0:
        raise InvalidInformationError("information matrix is not positive definite")
    info.setflags(write=False)
    return info


def isotropic_information(sigma: float, size: int = 2) -> np.ndarray:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return np.eye(size) / (sigma * sigma)


# -----------------------------
# Vertices
# -----------------------------

@dataclass
class PoseVertex:
    id: VertexId
    estimate: Pose2
    fixed: bool = False


@dataclass
class LandmarkVertex:
    id: VertexId
    estimate: Point2
    kind: LandmarkKind = LandmarkKind.POLE


# -----------------------------
# Edges
# -----------------------------

@dataclass(frozen=True, eq=False)
class RelPoseEdge:
    """Dead-reckoning or loop-closure constraint between two poses."""

    from_id: VertexId
    to_id: VertexId
    meas: Pose2
    info: np.ndarray

    @property
    def vertices(self) -> Tuple[VertexId, ...]:
        return (self.from_id, self.to_id)


@dataclass(frozen=True, eq=False)
class LandmarkObsEdge:
    """Landmark position observed in the sensor frame of a pose."""

    pose_id: VertexId
    landmark_id: VertexId
    meas: Point2
    info: np.ndarray

    @property
    def vertices(self) -> Tuple[VertexId, ...]:
        return (self.pose_id, self.landmark_id)


@dataclass(frozen=True, eq=False)
class GpsPriorEdge:
    """Loose global position of a pose, map frame."""

    pose_id: VertexId
    meas: Point2
    info: np.ndarray

    @property
    def vertices(self) -> Tuple[VertexId, ...]:
        return (self.pose_id,)


@dataclass(frozen=True, eq=False)
class AnchorPriorEdge:
    """Tight global position of a landmark read from aerial imagery, map frame."""

    landmark_id: VertexId
    meas: Point2
    info: np.ndarray

    @property
    def vertices(self) -> Tuple[VertexId, ...]:
        return (self.landmark_id,)


Edge = Union[RelPoseEdge, LandmarkObsEdge, GpsPriorEdge, AnchorPriorEdge]
PRIOR_EDGE_TYPES = (GpsPriorEdge, AnchorPriorEdge)


# -----------------------------
# Graph
# -----------------------------

class PoseGraph:
    """Vertices keyed by id in insertion order plus an ordered edge list."""

    def __init__(self):
        self._poses: Dict[VertexId, PoseVertex] = {}
        self._landmarks: Dict[VertexId, LandmarkVertex] = {}
        self._edges: List[Edge] = []

    def __len__(self) -> int:
        return len(self._poses) + len(self._landmarks)

    # Vertices

    def _check_new_id(self, vertex_id: VertexId) -> None:
        if vertex_id in self._poses or vertex_id in self._landmarks:
            raise GraphStructureError(f"duplicate vertex id {vertex_id}", vertex_id=vertex_id)

    def add_pose(self, vertex_id: VertexId, estimate: Pose2, fixed: bool = False) -> PoseVertex:
        vertex_id = int(vertex_id)
        self._check_new_id(vertex_id)
        vertex = PoseVertex(vertex_id, estimate, fixed)
        self._poses[vertex_id] = vertex
        return vertex

    def add_landmark(self, vertex_id: VertexId, estimate: Point2,
                     kind: LandmarkKind = LandmarkKind.POLE) -> LandmarkVertex:
        vertex_id = int(vertex_id)
        self._check_new_id(vertex_id)
        vertex = LandmarkVertex(vertex_id, estimate, LandmarkKind(kind))
        self._landmarks[vertex_id] = vertex
        return vertex

    def fix(self, vertex_id: VertexId) -> None:
        self.pose(vertex_id).fixed = True

    def release_fixed(self) -> List[VertexId]:
        """Un-fix every pose vertex; returns the ids that were fixed."""
        released = [v.id for v in self._poses.values() if v.fixed]
        for vertex_id in released:
            self._poses[vertex_id].fixed = False
        return released

    def has_vertex(self, vertex_id: VertexId) -> bool:
        return vertex_id in self._poses or vertex_id in self._landmarks

    def pose(self, vertex_id: VertexId) -> PoseVertex:
        try:
            return self._poses[vertex_id]
        except KeyError:
            if vertex_id in self._landmarks:
                raise GraphStructureError(f"vertex {vertex_id} is a landmark, expected a pose",
                                          vertex_id=vertex_id) from None
            raise GraphStructureError(f"missing pose vertex {vertex_id}", vertex_id=vertex_id) from None

    def landmark(self, vertex_id: VertexId) -> LandmarkVertex:
        try:
            return self._landmarks[vertex_id]
        except KeyError:
            if vertex_id in self._poses:
                raise GraphStructureError(f"vertex {vertex_id} is a pose, expected a landmark",
                                          vertex_id=vertex_id) from None
            raise GraphStructureError(f"missing landmark vertex {vertex_id}", vertex_id=vertex_id) from None

    def poses(self) -> List[PoseVertex]:
        return list(self._poses.values())

    def landmarks(self) -> List[LandmarkVertex]:
        return list(self._landmarks.values())

    def pose_ids(self) -> List[VertexId]:
        return list(self._poses)

    def landmark_ids(self) -> List[VertexId]:
        return list(self._landmarks)

    def fixed_ids(self) -> List[VertexId]:
        return [v.id for v in self._poses.values() if v.fixed]

    # Edges

    def add_edge(self, edge: Edge) -> Edge:
        if isinstance(edge, RelPoseEdge):
            self.pose(edge.from_id)
            self.pose(edge.to_id)
            object.__setattr__(edge, "info", check_information(edge.info, 3))
        elif isinstance(edge, LandmarkObsEdge):
            self.pose(edge.pose_id)
            self.landmark(edge.landmark_id)
            object.__setattr__(edge, "info", check_information(edge.info, 2))
        elif isinstance(edge, GpsPriorEdge):
            self.pose(edge.pose_id)
            object.__setattr__(edge, "info", check_information(edge.info, 2))
        elif isinstance(edge, AnchorPriorEdge):
            self.landmark(edge.landmark_id)
            object.__setattr__(edge, "info", check_information(edge.info, 2))
        else:
            raise TypeError(f"unsupported edge type {type(edge).__name__}")
        self._edges.append(edge)
        return edge

    @property
    def edges(self) -> List[Edge]:
        return list(self._edges)

    def iter_edges(self) -> Iterator[Edge]:
        return iter(self._edges)

    def edges_of_type(self, edge_type) -> List[Edge]:
        return [e for e in self._edges if isinstance(e, edge_type)]

    def has_priors(self) -> bool:
        return any(isinstance(e, PRIOR_EDGE_TYPES) for e in self._edges)

    def chi2(self) -> float:
        total = 0.0
        for edge in self._edges:
            r = residual(edge, self)
            total += float(r @ edge.info @ r)
        return total

    def copy(self) -> "PoseGraph":
        """Deep copy; edges are immutable and shared."""
        clone = PoseGraph()
        clone._poses = {k: copy.copy(v) for k, v in self._poses.items()}
        clone._landmarks = {k: copy.copy(v) for k, v in self._landmarks.items()}
        clone._edges = list(self._edges)
        return clone

    def vertex_estimate(self, vertex_id: VertexId) -> Union[Pose2, Point2]:
        if vertex_id in self._poses:
            return self._poses[vertex_id].estimate
        return self.landmark(vertex_id).estimate

    def set_estimate(self, vertex_id: VertexId, estimate: Union[Pose2, Point2]) -> None:
        if vertex_id in self._poses:
            self._poses[vertex_id].estimate = estimate
        else:
            self.landmark(vertex_id).estimate = estimate


# -----------------------------
# Residuals and Jacobians
# -----------------------------

def residual(edge: Edge, graph: PoseGraph) -> np.ndarray:
    """Error vector of one edge at the current estimates (2 or 3 components)."""
    if isinstance(edge, RelPoseEdge):
        a = graph.pose(edge.from_id).estimate
        b = graph.pose(edge.to_id).estimate
        ra_t = rotation_matrix(a.theta).T
        rm_t = rotation_matrix(edge.meas.theta).T
        d_t = ra_t @ np.array([b.x - a.x, b.y - a.y])
        e_t = rm_t @ (d_t - np.array([edge.meas.x, edge.meas.y]))
        e_theta = normalize_angle((b.theta - a.theta) - edge.meas.theta)
        return np.array([e_t[0], e_t[1], e_theta])
    if isinstance(edge, LandmarkObsEdge):
        p = graph.pose(edge.pose_id).estimate
        l = graph.landmark(edge.landmark_id).estimate
        local = p.inverse_transform_point(l)
        return np.array([local.x - edge.meas.x, local.y - edge.meas.y])
    if isinstance(edge, GpsPriorEdge):
        p = graph.pose(edge.pose_id).estimate
        return np.array([p.x - edge.meas.x, p.y - edge.meas.y])
    if isinstance(edge, AnchorPriorEdge):
        l = graph.landmark(edge.landmark_id).estimate
        return np.array([l.x - edge.meas.x, l.y - edge.meas.y])
    raise TypeError(f"unsupported edge type {type(edge).__name__}")


def linearize(edge: Edge, graph: PoseGraph) -> Dict[VertexId, np.ndarray]:
    """Analytic Jacobian blocks of the residual w.r.t. each incident vertex.

    Pose blocks are taken w.r.t. (x, y, theta), landmark blocks w.r.t. (x, y).
    """
    if isinstance(edge, RelPoseEdge):
        a = graph.pose(edge.from_id).estimate
        b = graph.pose(edge.to_id).estimate
        rm_t = rotation_matrix(edge.meas.theta).T
        ra_t = rotation_matrix(a.theta).T
        dt = np.array([b.x - a.x, b.y - a.y])
        j_a = np.zeros((3, 3))
        j_b = np.zeros((3, 3))
        j_a[:2, :2] = -rm_t @ ra_t
        j_a[:2, 2] = rm_t @ rotation_matrix_transpose_derivative(a.theta) @ dt
        j_a[2, 2] = -1.0
        j_b[:2, :2] = rm_t @ ra_t
        j_b[2, 2] = 1.0
        if edge.from_id == edge.to_id:
            return {edge.from_id: j_a + j_b}
        return {edge.from_id: j_a, edge.to_id: j_b}
    if isinstance(edge, LandmarkObsEdge):
        p = graph.pose(edge.pose_id).estimate
        l = graph.landmark(edge.landmark_id).estimate
        rp_t = rotation_matrix(p.theta).T
        diff = np.array([l.x - p.x, l.y - p.y])
        j_p = np.zeros((2, 3))
        j_p[:, :2] = -rp_t
        j_p[:, 2] = rotation_matrix_transpose_derivative(p.theta) @ diff
        return {edge.pose_id: j_p, edge.landmark_id: rp_t.copy()}
    if isinstance(edge, GpsPriorEdge):
        graph.pose(edge.pose_id)
        j_p = np.zeros((2, 3))
        j_p[:, :2] = np.eye(2)
        return {edge.pose_id: j_p}
    if isinstance(edge, AnchorPriorEdge):
        graph.landmark(edge.landmark_id)
        return {edge.landmark_id: np.eye(2)}
    raise TypeError(f"unsupported edge type {type(edge).__name__}")


# -----------------------------
# Prior attachment
# -----------------------------

def path_arc_length(points: Sequence[Point2]) -> np.ndarray:
    """Cumulative polyline length at each point, starting at 0."""
    if not points:
        return np.zeros(0)
    xy = np.array([[p.x, p.y] for p in points])
    steps = np.hypot(np.diff(xy[:, 0]), np.diff(xy[:, 1]))
    return np.concatenate([[0.0], np.cumsum(steps)])


def attach_gps_priors(graph: PoseGraph, filtered_path: Sequence[Tuple[VertexId, Point2]],
                      spacing: float = DEFAULT_GPS_SPACING,
                      sigma: float = DEFAULT_GPS_SIGMA) -> int:
    """Add a GPS prior at the first pose at or after every `spacing` meters of travel.

    `filtered_path` pairs pose vertex ids, in traversal order, with the
    filtered global position of that pose in the map frame.
    """
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not filtered_path:
        return 0

    info = isotropic_information(sigma)
    arc = path_arc_length([point for _, point in filtered_path])
    added = 0
    next_mark = 0.0
    for (vertex_id, point), s in zip(filtered_path, arc):
        if s >= next_mark:
            graph.add_edge(GpsPriorEdge(vertex_id, point, info))
            added += 1
            next_mark = (math.floor(s / spacing) + 1.0) * spacing

    logger.info(f"Attached {added} GPS priors over {arc[-1]:.1f} m (spacing {spacing} m, sigma {sigma} m)")
    return added


def attach_anchor_priors(graph: PoseGraph, labels: Sequence[Tuple[VertexId, Point2]],
                         sigma: float = DEFAULT_ANCHOR_SIGMA) -> int:
    """Add one tight anchor prior per labelled landmark (map frame)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    info = isotropic_information(sigma)
    for landmark_id, _ in labels:
        graph.landmark(landmark_id)
    for landmark_id, point in labels:
        graph.add_edge(AnchorPriorEdge(landmark_id, point, info))
    if labels:
        logger.info(f"Attached {len(labels)} anchor priors (sigma {sigma} m)")
    return len(labels)
