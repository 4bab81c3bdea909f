"""
Leave-n-out accuracy of anchored registration.

Labelled aerial landmarks are matched to map landmarks; for each n, subsets of
n matches are anchored, the graph is re-optimised, and the mean distance of
the remaining matched landmarks to their labels is recorded.
"""

import itertools
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from matplotlib.path import Path as PolygonPath
from pydantic import BaseModel, ConfigDict, Field, field_validator
from sklearn.neighbors import NearestNeighbors

from errors import ConfigError, GeoregError, InputError
from geometry import MapOrigin, Point2
from optimizer import OptimizerConfig, optimize
from pose_graph import DEFAULT_ANCHOR_SIGMA, PoseGraph, VertexId, attach_anchor_priors

logger = logging.getLogger(__name__)

Match = Tuple[VertexId, Point2]


class EvalMode(str, Enum):
    AUTO = "auto"
    EXHAUSTIVE = "exhaustive"
    SAMPLED = "sampled"


class EvalConfig(BaseModel):
    """Leave-n-out protocol settings. region_filter is a UTM polygon."""

    model_config = ConfigDict(extra="forbid")

    n_values: List[int] = [0]
    max_combinations: int = Field(1000, ge=1)
    sample_seed: int = 0
    anchor_sigma: float = Field(DEFAULT_ANCHOR_SIGMA, gt=0.0)
    match_radius: float = Field(3.0, gt=0.0)
    region_filter: Optional[List[Tuple[float, float]]] = None
    mode: EvalMode = EvalMode.AUTO
    workers: int = Field(1, ge=1)
    optimizer: OptimizerConfig = OptimizerConfig()

    @field_validator("n_values", mode="before")
    @classmethod
    def wrap_n_values(cls, value):
        return [value] if isinstance(value, (int, str)) else value

    @field_validator("n_values")
    @classmethod
    def check_n_values(cls, value: List[int]) -> List[int]:
        if not value or any(n < 0 for n in value):
            raise ValueError("n_values must be a non-empty list of non-negative counts")
        return value

    @field_validator("region_filter")
    @classmethod
    def check_polygon(cls, value):
        if value is not None and len(value) < 3:
            raise ValueError("region_filter needs at least 3 vertices")
        return value


class CurveRow(BaseModel):
    """One point of the curve. mean_error and stddev are NaN when every combination failed."""

    n: int
    combinations: int
    failures: int
    mean_error: float
    stddev: float


class ResidualRow(BaseModel):
    landmark_id: int
    label_e: float
    label_n: float
    est_e: float
    est_n: float
    error: float


class EvalReport(BaseModel):
    rows: List[CurveRow]
    residuals: List[ResidualRow]
    matched: int

    def curve_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.n, r.combinations, r.mean_error, r.stddev, r.failures) for r in self.rows],
            columns=["n", "combos", "mean_err", "stddev", "failures"],
        )

    def residual_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.residuals],
                            columns=["landmark_id", "label_e", "label_n", "est_e", "est_n", "error"])


# -----------------------------
# Label matching
# -----------------------------

def match_labels(graph: PoseGraph, labels: Sequence[Point2], radius: float) -> List[Match]:
    """Mutual nearest neighbours between landmark estimates and labels, within radius.

    Both sides are in the map frame. Pairs come back in landmark order.
    """
    landmarks = graph.landmarks()
    if not landmarks or not labels:
        return []
    lm_xy = np.array([[v.estimate.x, v.estimate.y] for v in landmarks])
    label_xy = np.array([[p.x, p.y] for p in labels])

    _, nearest_landmark = NearestNeighbors(n_neighbors=1).fit(lm_xy).kneighbors(label_xy)
    dist, nearest_label = NearestNeighbors(n_neighbors=1).fit(label_xy).kneighbors(lm_xy)

    matches: List[Match] = []
    for i, vertex in enumerate(landmarks):
        j = int(nearest_label[i, 0])
        if int(nearest_landmark[j, 0]) == i and dist[i, 0] <= radius:
            matches.append((vertex.id, labels[j]))
    logger.info(f"Matched {len(matches)} of {len(labels)} labels to {len(landmarks)} landmarks (radius {radius} m)")
    return matches


def unmatched_labels(labels: Sequence[Point2], matches: Sequence[Match]) -> List[Point2]:
    """Labels left over after matching, in input order.

    Each match consumes one label, so of several labels at the same
    coordinates only as many are dropped as were matched.
    """
    used = Counter(p for _, p in matches)
    unmatched = []
    for p in labels:
        if used[p] > 0:
            used[p] -= 1
        else:
            unmatched.append(p)
    return unmatched


def filter_region(matched: Sequence[Match], polygon: Sequence[Tuple[float, float]],
                  origin: Optional[MapOrigin] = None) -> List[Match]:
    """Keep matches whose label lies inside a UTM polygon."""
    origin = origin or MapOrigin()
    region = PolygonPath(np.asarray(polygon, dtype=float) - [origin.easting_offset, origin.northing_offset])
    return [(vid, p) for vid, p in matched if region.contains_point((p.x, p.y))]


# -----------------------------
# Leave-n-out curve
# -----------------------------

def choose_subsets(m: int, n: int, config: EvalConfig) -> List[Tuple[int, ...]]:
    """Index subsets to anchor, in lexicographic order."""
    total = math.comb(m, n)
    mode = config.mode
    if mode == EvalMode.AUTO:
        mode = EvalMode.EXHAUSTIVE if total <= config.max_combinations else EvalMode.SAMPLED
    if mode == EvalMode.EXHAUSTIVE:
        if total > config.max_combinations:
            raise ConfigError(f"exhaustive mode needs C({m},{n})={total} <= max_combinations "
                              f"({config.max_combinations})", key="max_combinations")
        return list(itertools.combinations(range(m), n))

    if total <= config.max_combinations:
        return list(itertools.combinations(range(m), n))
    rng = np.random.default_rng([config.sample_seed, n])
    chosen = set()
    while len(chosen) < config.max_combinations:
        chosen.add(tuple(sorted(int(i) for i in rng.choice(m, size=n, replace=False))))
    return sorted(chosen)


def _holdout_error(graph: PoseGraph, matched: Sequence[Match], subset: Tuple[int, ...],
                   config: EvalConfig) -> Optional[float]:
    clone = graph.copy()
    attach_anchor_priors(clone, [matched[i] for i in subset], config.anchor_sigma)
    try:
        optimize(clone, config.optimizer)
    except GeoregError as exc:
        logger.warning(f"Anchoring subset {subset} failed: {exc}")
        return None
    anchored = set(subset)
    errors = [clone.landmark(vid).estimate.distance_to(label)
              for i, (vid, label) in enumerate(matched) if i not in anchored]
    return float(np.mean(errors))


def _curve_row(graph: PoseGraph, matched: Sequence[Match], n: int, config: EvalConfig) -> CurveRow:
    subsets = choose_subsets(len(matched), n, config)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(lambda s: _holdout_error(graph, matched, s, config), subsets))
    else:
        results = [_holdout_error(graph, matched, s, config) for s in subsets]

    values = np.array([r for r in results if r is not None])
    failures = len(results) - len(values)
    if not len(values):
        logger.warning(f"n={n}: all {failures} optimisations failed; the row has no mean error")
        return CurveRow(n=n, combinations=len(subsets), failures=failures, mean_error=float("nan"),
                        stddev=float("nan"))
    if failures:
        logger.warning(f"n={n}: {failures} of {len(subsets)} optimisations failed and were excluded")
    mean = float(values.mean())
    std = float(values.std())
    logger.info(f"n={n}: mean holdout error {mean:.3f} m (sd {std:.3f}) over {len(values)} combinations")
    return CurveRow(n=n, combinations=len(subsets), failures=failures, mean_error=mean, stddev=std)


def _full_anchor_residuals(graph: PoseGraph, matched: Sequence[Match], config: EvalConfig,
                           origin: MapOrigin) -> List[ResidualRow]:
    clone = graph.copy()
    attach_anchor_priors(clone, list(matched), config.anchor_sigma)
    try:
        optimize(clone, config.optimizer)
    except GeoregError as exc:
        logger.warning(f"Full-anchor optimisation failed; no residual table: {exc}")
        return []
    rows = []
    for vid, label in matched:
        est = clone.landmark(vid).estimate
        rows.append(ResidualRow(
            landmark_id=vid,
            label_e=label.x + origin.easting_offset,
            label_n=label.y + origin.northing_offset,
            est_e=est.x + origin.easting_offset,
            est_n=est.y + origin.northing_offset,
            error=est.distance_to(label),
        ))
    return rows


def evaluate_curve(graph: PoseGraph, matched: Sequence[Match], config: Optional[EvalConfig] = None,
                   origin: Optional[MapOrigin] = None) -> EvalReport:
    """Accuracy-vs-n curve plus the residual table of anchoring every match.

    The input graph is never modified; every combination runs on a copy.
    """
    config = config or EvalConfig()
    origin = origin or MapOrigin()
    if config.region_filter is not None:
        matched = filter_region(matched, config.region_filter, origin)
        logger.info(f"Region filter keeps {len(matched)} matches")
    if not matched:
        raise InputError("no matched labels to evaluate")
    for n in config.n_values:
        if n >= len(matched):
            raise ConfigError(f"n={n} leaves no held-out landmark among {len(matched)} matches", key="n_values")

    rows = [_curve_row(graph, matched, n, config) for n in config.n_values]
    residuals = _full_anchor_residuals(graph, matched, config, origin)
    return EvalReport(rows=rows, residuals=residuals, matched=len(matched))


def compare_regions(graph: PoseGraph, matched: Sequence[Match], regions: Dict[str, Sequence[Tuple[float, float]]],
                    config: Optional[EvalConfig] = None,
                    origin: Optional[MapOrigin] = None) -> Dict[str, EvalReport]:
    """One curve per named UTM polygon."""
    config = config or EvalConfig()
    return {name: evaluate_curve(graph, matched, config.model_copy(update={"region_filter": list(polygon)}), origin)
            for name, polygon in regions.items()}
