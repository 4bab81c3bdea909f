"""
Closed-form weighted SE2 alignment of a local trajectory to GPS positions.

The fitted transform is applied rigidly to the whole map (poses and
landmarks), so the relative structure of the local map is untouched.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import CorrespondenceError, DegenerateAlignmentError
from geometry import MapOrigin, Point2, Pose2, utm_to_map
from gps_filter import GateDecision, GpsFix
from pose_graph import DEFAULT_GPS_SIGMA, PoseGraph

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Paired local/global points with non-negative weights, stored as (N, 2) / (N,) arrays."""

    local: np.ndarray
    global_: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        local = np.asarray(self.local, dtype=float).reshape(-1, 2)
        global_ = np.asarray(self.global_, dtype=float).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if not (len(local) == len(global_) == len(weights)):
            raise CorrespondenceError("local, global and weight arrays differ in length")
        if not (np.all(np.isfinite(local)) and np.all(np.isfinite(global_)) and np.all(np.isfinite(weights))):
            raise CorrespondenceError("correspondences must be finite")
        if np.any(weights < 0):
            raise CorrespondenceError("correspondence weights must be non-negative")
        object.__setattr__(self, "local", local)
        object.__setattr__(self, "global_", global_)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_pairs(cls, pairs: Sequence[Tuple[Point2, Point2, float]]) -> "CorrespondenceSet":
        if not pairs:
            return cls(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0))
        return cls(
            np.array([[l.x, l.y] for l, _, _ in pairs]),
            np.array([[g.x, g.y] for _, g, _ in pairs]),
            np.array([w for _, _, w in pairs]),
        )

    def __len__(self) -> int:
        return len(self.weights)


def fit_se2(c: CorrespondenceSet, min_rank: int = 2) -> Pose2:
    """Transform T minimising sum_i w_i |T(local_i) - global_i|^2.

    `min_rank=1` accepts collinear local points: the rotation is still unique
    once the points span a line, which is all a heading estimate needs.
    """
    total = c.weights.sum()
    if len(c) < 2 or not total > 0:
        raise DegenerateAlignmentError(f"need at least 2 weighted pairs, got {np.count_nonzero(c.weights)}", rank=0)

    local_centroid = c.weights @ c.local / total
    global_centroid = c.weights @ c.global_ / total
    a = c.local - local_centroid
    b = c.global_ - global_centroid

    scatter = (a * c.weights[:, None]).T @ a
    singular = np.linalg.svd(scatter, compute_uv=False)
    rank = int(np.sum(singular > RANK_TOLERANCE * singular[0])) if singular[0] > 0 else 0
    if rank < min_rank:
        raise DegenerateAlignmentError(
            f"weighted local points are {'coincident' if rank == 0 else 'collinear'} "
            f"(scatter rank {rank} < {min_rank}); the SE2 fit is not unique",
            rank=rank,
        )

    cross = np.sum(c.weights * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))
    dot = np.sum(c.weights * (a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]))
    theta = math.atan2(cross, dot)
    ct, st = math.cos(theta), math.sin(theta)
    tx = global_centroid[0] - (ct * local_centroid[0] - st * local_centroid[1])
    ty = global_centroid[1] - (st * local_centroid[0] + ct * local_centroid[1])
    return Pose2(tx, ty, theta)


def alignment_chi2(transform: Pose2, c: CorrespondenceSet) -> float:
    moved = (transform.matrix()[:2, :2] @ c.local.T).T + np.array([transform.x, transform.y])
    return float(np.sum(c.weights * np.sum((moved - c.global_) ** 2, axis=1)))


def apply_to_map(transform: Pose2, trajectory: Sequence[Pose2],
                 landmarks: Sequence[Point2]) -> Tuple[List[Pose2], List[Point2]]:
    return ([transform.compose(p) for p in trajectory],
            [transform.transform_point(q) for q in landmarks])


def apply_to_graph(transform: Pose2, graph: PoseGraph) -> None:
    """Move every vertex estimate, fixed ones included, by `transform`."""
    for vertex in graph.poses():
        vertex.estimate = transform.compose(vertex.estimate)
    for vertex in graph.landmarks():
        vertex.estimate = transform.transform_point(vertex.estimate)


def build_correspondences(local_path: Sequence[Tuple[float, Pose2]], fixes: Sequence[GpsFix], max_dt: float,
                          origin: Optional[MapOrigin] = None,
                          decisions: Optional[Sequence[GateDecision]] = None,
                          default_sigma: float = DEFAULT_GPS_SIGMA) -> CorrespondenceSet:
    """Pair every fix with the temporally nearest local pose within `max_dt`.

    Ties go to the earlier pose. Weights are 1/sigma^2; fixes the gate
    rejected get weight 0. Global points are expressed in the map frame.
    """
    origin = origin or MapOrigin()
    if not local_path:
        raise CorrespondenceError("local path is empty")
    times = np.array([t for t, _ in local_path])
    rejected: Dict[float, bool] = {}
    if decisions is not None:
        rejected = {d.fix.t: not d.accepted for d in decisions}

    pairs: List[Tuple[Point2, Point2, float]] = []
    for fix in fixes:
        idx = int(np.searchsorted(times, fix.t))
        candidates = [i for i in (idx - 1, idx) if 0 <= i < len(times)]
        best = min(candidates, key=lambda i: (abs(times[i] - fix.t), i))
        if abs(times[best] - fix.t) > max_dt:
            continue
        sigma = fix.nominal_sigma if fix.nominal_sigma > 0 else default_sigma
        weight = 0.0 if rejected.get(fix.t, False) else 1.0 / (sigma * sigma)
        pairs.append((local_path[best][1].translation, utm_to_map(fix.position, origin), weight))

    if not pairs:
        raise CorrespondenceError(f"no GPS fix lies within {max_dt} s of a local pose")
    dropped = len(fixes) - len(pairs)
    logger.info(f"Built {len(pairs)} correspondences ({dropped} fixes unmatched, "
                f"{sum(1 for p in pairs if p[2] == 0.0)} zero-weighted)")
    return CorrespondenceSet.from_pairs(pairs)
