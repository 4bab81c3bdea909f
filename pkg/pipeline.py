"""
The three registration stages composed from the library modules, in the
order they are meant to run: rigid alignment, loose GPS priors, tight
aerial anchors. The CLI and the end-to-end tests both go through here.
"""

import logging
from typing import List, Optional, Sequence, Tuple

from errors import DegenerateAlignmentError, InputError
from evaluation import Match, match_labels, unmatched_labels
from geometry import MapOrigin, Point2, Pose2, utm_to_map
from gps_filter import (
    FilterConfig,
    FilterState,
    GateDecision,
    GpsFix,
    OdomSample,
    initial_state_from_fixes,
    run_filter,
    sample_path,
)
from optimizer import OptimizeReport, OptimizerConfig, optimize
from pose_graph import (
    DEFAULT_ANCHOR_SIGMA,
    DEFAULT_GPS_SIGMA,
    DEFAULT_GPS_SPACING,
    PoseGraph,
    VertexId,
    attach_anchor_priors,
    attach_gps_priors,
)
from rigid_align import CorrespondenceSet, alignment_chi2, apply_to_graph, build_correspondences, fit_se2

logger = logging.getLogger(__name__)

PoseTimes = Sequence[Tuple[VertexId, float]]


def filter_gps(odom: Sequence[OdomSample], gps: Sequence[GpsFix], origin: MapOrigin,
               config: Optional[FilterConfig] = None,
               init: Optional[FilterState] = None) -> Tuple[List[Tuple[float, Pose2]], List[GateDecision]]:
    """Run the UKF from a GPS-placed odometry track at the first odometry time unless `init` is given."""
    config = config or FilterConfig()
    if not odom:
        raise InputError("odometry stream is empty")
    if init is None:
        init = initial_state_from_fixes(gps, origin, t=odom[0].t, default_sigma=config.gps_sigma, odom=odom,
                                        baseline_sigmas=config.init_baseline_sigmas)
    return run_filter(odom, gps, init, config, origin)


def graph_path(graph: PoseGraph, pose_times: PoseTimes) -> List[Tuple[float, Pose2]]:
    """The graph's pose estimates as a timed path."""
    return [(t, graph.pose(vid).estimate) for vid, t in pose_times]


def align_rigid(graph: PoseGraph, pose_times: PoseTimes, fixes: Sequence[GpsFix], origin: MapOrigin,
                max_dt: float = 0.5, decisions: Optional[Sequence[GateDecision]] = None,
                gps_sigma: float = DEFAULT_GPS_SIGMA) -> Tuple[Pose2, float, int]:
    """Fit the local trajectory to GPS and move the whole map. Returns (T, chi2, pairs)."""
    c = build_correspondences(graph_path(graph, pose_times), fixes, max_dt, origin, decisions, gps_sigma)
    transform = fit_se2(c)
    apply_to_graph(transform, graph)
    chi2 = alignment_chi2(transform, c)
    logger.info(f"Rigid alignment: theta={transform.theta:.6f} rad, t=({transform.x:.3f}, {transform.y:.3f}), "
                f"chi2={chi2:.3f} over {len(c)} pairs")
    return transform, chi2, len(c)


def register_loose(graph: PoseGraph, filtered_path: Sequence[Tuple[float, Pose2]], pose_times: PoseTimes,
                   spacing: float = DEFAULT_GPS_SPACING, sigma: float = DEFAULT_GPS_SIGMA,
                   rigid_init: bool = True, keep_fixed: bool = False,
                   config: Optional[OptimizerConfig] = None) -> OptimizeReport:
    """Attach GPS priors from the filtered path and optimise.

    The map is first moved rigidly onto the filtered path so the optimiser
    starts near the answer; fixed vertices are released because the priors
    now carry the gauge.
    """
    if not pose_times:
        raise InputError("no pose timestamps; cannot place GPS priors on the graph")
    sampled = sample_path(filtered_path, [t for _, t in pose_times])
    anchored_path = [(vid, p.translation) for (vid, _), p in zip(pose_times, sampled)]

    if rigid_init:
        local = [graph.pose(vid).estimate.translation for vid, _ in pose_times]
        pairs = [(l, g, 1.0) for l, (_, g) in zip(local, anchored_path)]
        try:
            transform = fit_se2(CorrespondenceSet.from_pairs(pairs))
            apply_to_graph(transform, graph)
            logger.info(f"Rigid initialisation: theta={transform.theta:.6f}, t=({transform.x:.2f}, {transform.y:.2f})")
        except DegenerateAlignmentError as exc:
            logger.warning(f"Skipping rigid initialisation: {exc}")
    if not keep_fixed:
        released = graph.release_fixed()
        if released:
            logger.info(f"Released fixed vertices {released}; GPS priors now define the frame")

    attach_gps_priors(graph, anchored_path, spacing, sigma)
    return optimize(graph, config)


def register_anchors(graph: PoseGraph, labels_utm: Sequence[Point2], origin: MapOrigin,
                     sigma: float = DEFAULT_ANCHOR_SIGMA, radius: float = 3.0,
                     config: Optional[OptimizerConfig] = None) -> Tuple[List[Match], OptimizeReport]:
    """Match aerial labels to landmarks of a roughly registered map, anchor them and optimise."""
    labels = [utm_to_map(p, origin) for p in labels_utm]
    matches = match_labels(graph, labels, radius)
    missing = unmatched_labels(labels, matches)
    if missing:
        logger.warning(f"{len(missing)} aerial labels have no landmark within {radius} m")
    attach_anchor_priors(graph, matches, sigma)
    return matches, optimize(graph, config)
