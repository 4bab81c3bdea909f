"""
Synthetic worlds for exercising every stage of the registration pipeline.

A waypoint-following vehicle drives the same midpoint unicycle model the
filter uses, at a fixed odometry rate. From the ground truth we derive noisy
odometry, GPS with a random-walk bias and outliers, lidar-style landmark
observations, aerial labels carrying a per-tile bias, and the locally
consistent pose graph a SLAM front end would hand us (first keyframe fixed
at the identity, no global information).

Randomness comes from one numpy SeedSequence split into child streams, one
per concern, so changing one sensor never reshuffles another:

    0 poles   1 tiles   2 odometry   3 gps   4 observations   5 labels   6 loop closures
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.spatial import cKDTree

from errors import ConfigError
from fileio import (
    write_gps_csv,
    write_labels_csv,
    write_odom_csv,
    write_origin,
    write_path_csv,
    write_pose_times_csv,
    write_table,
)
from geometry import MapOrigin, Point2, Pose2, normalize_angle, points_to_array, relative_pose
from gps_filter import GpsFix, OdomSample, motion_model, sample_path
from graph_io import write_graph
from pose_graph import LandmarkKind, LandmarkObsEdge, PoseGraph, RelPoseEdge, isotropic_information
from rigid_align import CorrespondenceSet, apply_to_map, fit_se2

logger = logging.getLogger(__name__)

LANDMARK_ID_OFFSET = 1_000_000
STREAMS = ("poles", "tiles", "odometry", "gps", "observations", "labels", "loop_closures")

ODOM_VARIANCE_FLOOR = 1e-8
SIGMA_FLOOR = 1e-4

Window = Tuple[float, float]


def _listify(value):
    """Accept a bare scalar or pair where a list is expected (key=value files)."""
    if value is None or value == "":
        return []
    if isinstance(value, (str, tuple)):
        return [value]
    return value


# -----------------------------
# Configuration
# -----------------------------

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class OdomNoiseConfig(_Section):
    sigma_v: float = Field(0.05, ge=0.0)
    sigma_omega: float = Field(0.01, ge=0.0)


class GpsSimConfig(_Section):
    rate_hz: float = Field(1.0, gt=0.0)
    sigma: float = Field(5.0, ge=0.0)
    bias_walk_sigma: float = Field(0.05, ge=0.0)
    outage_windows: List[Window] = []
    outlier_rate: float = Field(0.01, ge=0.0, le=1.0)
    outlier_magnitude: float = Field(1000.0, ge=0.0)

    @field_validator("outage_windows", mode="before")
    @classmethod
    def wrap_windows(cls, value):
        return _listify(value)

    @field_validator("outage_windows")
    @classmethod
    def check_windows(cls, windows: List[Window]) -> List[Window]:
        for start, end in windows:
            if not end > start:
                raise ValueError(f"outage window ({start}, {end}) must end after it starts")
        return windows


class AerialConfig(_Section):
    tile_size: float = Field(200.0, gt=0.0)
    tile_bias_range: Window = (0.28, 0.75)
    label_fraction: float = Field(1.0, ge=0.0, le=1.0)
    label_sigma: float = Field(0.0, ge=0.0)

    @field_validator("tile_bias_range", mode="before")
    @classmethod
    def unwrap_pair(cls, value):
        if isinstance(value, list) and len(value) == 1 and isinstance(value[0], tuple):
            return value[0]
        return value

    @field_validator("tile_bias_range")
    @classmethod
    def check_range(cls, value: Window) -> Window:
        low, high = value
        if low < 0 or high < low:
            raise ValueError(f"tile_bias_range must satisfy 0 <= low <= high, got {value}")
        return value


class LandmarkObsConfig(_Section):
    max_range: float = Field(25.0, ge=0.0)
    sigma: float = Field(0.1, ge=0.0)


class LoopClosureConfig(_Section):
    enabled: bool = False
    radius: float = Field(3.0, gt=0.0)
    min_separation: float = Field(30.0, ge=0.0)
    sigma_xy: float = Field(0.05, ge=0.0)
    sigma_theta: float = Field(0.01, ge=0.0)


class SimConfig(_Section):
    """Everything that determines a synthetic world. Same config, same bytes."""

    seed: int = 0
    preset: Optional[Literal["loop", "figure8", "campus", "line"]] = "loop"
    waypoints: List[Tuple[float, float]] = []
    speed: float = Field(5.0, gt=0.0)
    odom_rate_hz: float = Field(10.0, gt=0.0)
    keyframe_interval: float = Field(1.0, gt=0.0)
    pole_density: float = Field(3.0, ge=0.0)
    pole_offset: float = Field(4.0, ge=0.0)
    building_fraction: float = Field(0.2, ge=0.0, le=1.0)
    origin_easting: float = 332000.0
    origin_northing: float = 6248000.0
    zone_label: str = "56S"
    odom_noise: OdomNoiseConfig = OdomNoiseConfig()
    gps: GpsSimConfig = GpsSimConfig()
    aerial: AerialConfig = AerialConfig()
    landmark_obs: LandmarkObsConfig = LandmarkObsConfig()
    loop_closure: LoopClosureConfig = LoopClosureConfig()

    @field_validator("waypoints", mode="before")
    @classmethod
    def wrap_waypoints(cls, value):
        return _listify(value)

    @model_validator(mode="after")
    def campus_outage(self) -> "SimConfig":
        # The campus drive passes under a building: one 200 m GPS outage by default.
        if self.preset == "campus" and not self.waypoints and "outage_windows" not in self.gps.model_fields_set:
            self.gps = self.gps.model_copy(update={"outage_windows": [(150.0, 190.0)]})
        return self

    @property
    def origin(self) -> MapOrigin:
        return MapOrigin(self.origin_easting, self.origin_northing, self.zone_label)

    def path_waypoints(self) -> List[Tuple[float, float]]:
        if self.waypoints:
            return list(self.waypoints)
        if self.preset is None:
            return []
        return PRESETS[self.preset]


def _laps(corners: Sequence[Tuple[float, float]], laps: int) -> List[Tuple[float, float]]:
    closed = list(corners) + [corners[0]]
    path = [closed[0]]
    for _ in range(laps):
        path.extend(closed[1:])
    return path


PRESETS: Dict[str, List[Tuple[float, float]]] = {
    "loop": _laps([(0.0, 0.0), (120.0, 0.0), (120.0, 80.0), (0.0, 80.0)], 2),
    "figure8": [(0.0, 0.0), (60.0, 60.0), (120.0, 0.0), (60.0, -60.0), (0.0, 0.0),
                (-60.0, 60.0), (-120.0, 0.0), (-60.0, -60.0), (0.0, 0.0)],
    "campus": (_laps([(0.0, 0.0), (250.0, 0.0), (250.0, 150.0), (0.0, 150.0)], 1)
               + _laps([(0.0, 0.0), (0.0, -200.0), (-200.0, -200.0), (-200.0, 0.0)], 1)[1:]
               + [(250.0, 0.0), (250.0, 150.0)]),
    "line": [(0.0, 0.0), (200.0, 0.0), (400.0, 40.0)],
}


# -----------------------------
# World and result
# -----------------------------

@dataclass
class SimWorld:
    truth_path: List[Tuple[float, Pose2]]
    poles: List[Tuple[int, Point2]]
    pole_kinds: Dict[int, LandmarkKind]
    tile_biases: Dict[Tuple[int, int], Point2]
    labels: List[Tuple[int, Point2]]
    tile_size: float

    def tile_of(self, utm: Point2) -> Tuple[int, int]:
        return (math.floor(utm.x / self.tile_size), math.floor(utm.y / self.tile_size))

    def pole(self, pole_id: int) -> Point2:
        return dict(self.poles)[pole_id]


@dataclass
class SimResult:
    config: SimConfig
    world: SimWorld
    odom: List[OdomSample]
    gps: List[GpsFix]
    observations: List[Tuple[int, int, Point2]]
    initial_graph: PoseGraph
    keyframes: List[int] = field(default_factory=list)

    @property
    def origin(self) -> MapOrigin:
        return self.config.origin

    @property
    def pose_times(self) -> List[Tuple[int, float]]:
        return [(vertex_id, self.world.truth_path[k][0]) for vertex_id, k in enumerate(self.keyframes)]

    def truth_keyframes(self) -> List[Pose2]:
        """Ground-truth keyframe poses in the map frame, in vertex order."""
        return [self.world.truth_path[k][1] for k in self.keyframes]

    def truth_landmarks(self) -> Dict[int, Point2]:
        """Ground-truth map-frame position of every landmark vertex."""
        origin = self.origin
        poles = dict(self.world.poles)
        return {vid: Point2(poles[vid - LANDMARK_ID_OFFSET].x - origin.easting_offset,
                            poles[vid - LANDMARK_ID_OFFSET].y - origin.northing_offset)
                for vid in self.initial_graph.landmark_ids()}


# -----------------------------
# Sensor models
# -----------------------------

def gps_bias_walk(rng: np.random.Generator, n: int, dt: float, sigma: float) -> np.ndarray:
    """2D random walk sampled every dt: b[0] = 0, b[k] - b[k-1] ~ N(0, sigma^2 dt)."""
    if n <= 0:
        return np.zeros((0, 2))
    steps = rng.normal(0.0, 1.0, size=(n - 1, 2)) * sigma * math.sqrt(dt)
    return np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)])


def simulate_gps(rng: np.random.Generator, truth_xy: np.ndarray, times: np.ndarray,
                 config: GpsSimConfig, origin: MapOrigin) -> List[GpsFix]:
    """Corrupt map-frame truth positions into UTM fixes.

    Draw order: white noise, bias steps, outlier coin flips, outlier disc
    samples. Inside an outage window every fix is an outlier.
    """
    n = len(times)
    white = rng.normal(0.0, 1.0, size=(n, 2)) * config.sigma
    bias = gps_bias_walk(rng, n, 1.0 / config.rate_hz, config.bias_walk_sigma)
    coins = rng.uniform(size=n)
    disc = rng.uniform(size=(n, 2))

    in_outage = np.zeros(n, dtype=bool)
    for start, end in config.outage_windows:
        in_outage |= (times >= start) & (times <= end)
    outlier = in_outage | (coins < config.outlier_rate)

    radius = config.outlier_magnitude * np.sqrt(disc[:, 0])
    angle = 2.0 * math.pi * disc[:, 1]
    jump = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])

    positions = np.where(outlier[:, None], truth_xy + jump, truth_xy + white + bias)
    return [
        GpsFix(float(t), float(x + origin.easting_offset), float(y + origin.northing_offset),
               config.sigma, bool(o))
        for t, (x, y), o in zip(times, positions, outlier)
    ]


def _drive(waypoints: Sequence[Tuple[float, float]], speed: float, rate: float,
           gain: float = 1.5, max_turn: float = 1.0, reach: float = 5.0) -> Tuple[np.ndarray, np.ndarray]:
    """Follow the waypoints; returns (K+1, 3) truth states and (K+1, 2) controls."""
    dt = 1.0 / rate
    wps = np.asarray(waypoints, dtype=float)
    heading = math.atan2(wps[1, 1] - wps[0, 1], wps[1, 0] - wps[0, 0])
    x = np.array([wps[0, 0], wps[0, 1], heading])
    states = [x]
    controls: List[Tuple[float, float]] = []
    length = float(np.sum(np.hypot(*np.diff(wps, axis=0).T)))
    max_steps = int(10 * length / (speed * dt)) + 100

    target = 1
    while target < len(wps):
        dx, dy = wps[target] - x[:2]
        if math.hypot(dx, dy) < reach:
            target += 1
            continue
        error = normalize_angle(math.atan2(dy, dx) - x[2])
        omega = float(np.clip(gain * error, -max_turn, max_turn))
        controls.append((speed, omega))
        x = motion_model(x, speed, omega, dt)
        states.append(x)
        if len(states) > max_steps:
            raise ConfigError("vehicle could not reach the waypoints; check spacing and turn radius",
                              key="waypoints")
    controls.append((0.0, 0.0))
    return np.array(states), np.array(controls)


def _place_poles(rng: np.random.Generator, waypoints: Sequence[Tuple[float, float]],
                 config: SimConfig) -> Tuple[np.ndarray, List[LandmarkKind]]:
    """Poles alternate sides along every segment; repeats on later laps are dropped."""
    if config.pole_density <= 0:
        return np.zeros((0, 2)), []
    spacing = 100.0 / config.pole_density
    points: List[np.ndarray] = []
    wps = np.asarray(waypoints, dtype=float)
    side = 1.0
    for a, b in zip(wps[:-1], wps[1:]):
        seg = b - a
        length = float(np.hypot(*seg))
        if length == 0:
            continue
        tangent = seg / length
        normal = np.array([-tangent[1], tangent[0]])
        s = 0.5 * spacing
        while s < length:
            jitter = rng.normal(0.0, 1.0, size=2)
            points.append(a + tangent * (s + jitter[0]) + normal * side * (config.pole_offset + 0.5 * jitter[1]))
            side = -side
            s += spacing

    kept: List[np.ndarray] = []
    for p in points:
        if all(np.hypot(*(p - q)) >= 0.4 * spacing for q in kept):
            kept.append(p)
    kinds_draw = rng.uniform(size=len(kept))
    kinds = [LandmarkKind.BUILDING_CORNER if u < config.building_fraction else LandmarkKind.POLE
             for u in kinds_draw]
    return (np.array(kept) if kept else np.zeros((0, 2))), kinds


def _tile_biases(rng: np.random.Generator, tiles: Sequence[Tuple[int, int]],
                 config: AerialConfig) -> Dict[Tuple[int, int], Point2]:
    low, high = config.tile_bias_range
    biases = {}
    for tile in sorted(set(tiles)):
        magnitude = rng.uniform(low, high)
        direction = rng.uniform(0.0, 2.0 * math.pi)
        biases[tile] = Point2(magnitude * math.cos(direction), magnitude * math.sin(direction))
    return biases


def _step_jacobians(x: np.ndarray, v: float, omega: float, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    heading = x[2] + 0.5 * omega * dt
    c, s = math.cos(heading), math.sin(heading)
    f = np.array([[1.0, 0.0, -v * dt * s], [0.0, 1.0, v * dt * c], [0.0, 0.0, 1.0]])
    g = np.array([[dt * c, -0.5 * v * dt * dt * s], [dt * s, 0.5 * v * dt * dt * c], [0.0, dt]])
    return f, g


def _odometry_edge(controls: np.ndarray, dt: float, noise: OdomNoiseConfig) -> Tuple[Pose2, np.ndarray]:
    """Integrate noisy controls from the identity; information from first-order propagation."""
    x = np.zeros(3)
    cov = np.zeros((3, 3))
    sigma = np.diag([noise.sigma_v ** 2, noise.sigma_omega ** 2])
    for v, omega in controls:
        f, g = _step_jacobians(x, v, omega, dt)
        cov = f @ cov @ f.T + g @ sigma @ g.T
        x = motion_model(x, v, omega, dt)
    meas = Pose2.from_array(x)
    # The residual's translation is expressed in the measurement frame.
    rot = np.eye(3)
    rot[:2, :2] = meas.matrix()[:2, :2].T
    cov = rot @ cov @ rot.T + np.eye(3) * ODOM_VARIANCE_FLOOR
    info = np.linalg.inv(0.5 * (cov + cov.T))
    return meas, 0.5 * (info + info.T)


# -----------------------------
# Generation
# -----------------------------

def generate(config: SimConfig) -> SimResult:
    """Build a world, its sensor streams and the locally consistent graph."""
    waypoints = config.path_waypoints()
    if len(waypoints) < 2 or not np.any(np.hypot(*np.diff(np.asarray(waypoints, dtype=float), axis=0).T) > 0):
        raise ConfigError("simulated path is empty; give a preset or at least two distinct waypoints",
                          key="waypoints")
    rngs = {name: np.random.default_rng(child)
            for name, child in zip(STREAMS, np.random.SeedSequence(config.seed).spawn(len(STREAMS)))}
    origin = config.origin
    rate = config.odom_rate_hz
    dt = 1.0 / rate

    states, controls = _drive(waypoints, config.speed, rate)
    times = np.arange(len(states)) / rate
    truth_path = [(float(t), Pose2.from_array(s)) for t, s in zip(times, states)]

    # Odometry: truth twist plus white noise, one sample per truth state.
    noise = rngs["odometry"].normal(0.0, 1.0, size=controls.shape) * [config.odom_noise.sigma_v,
                                                                        config.odom_noise.sigma_omega]
    noisy = controls + noise
    odom = [OdomSample(float(t), float(v), float(w)) for t, (v, w) in zip(times, noisy)]

    # Keyframes and dead-reckoning edges.
    step = max(1, int(round(config.keyframe_interval * rate)))
    keyframes = list(range(0, len(states), step))
    graph = PoseGraph()
    graph.add_pose(0, Pose2.identity(), fixed=True)
    for i in range(1, len(keyframes)):
        meas, info = _odometry_edge(noisy[keyframes[i - 1]:keyframes[i]], dt, config.odom_noise)
        graph.add_pose(i, graph.pose(i - 1).estimate.compose(meas))
        graph.add_edge(RelPoseEdge(i - 1, i, meas, info))

    # Poles, observations and landmark vertices.
    pole_xy, kinds = _place_poles(rngs["poles"], waypoints, config)
    poles_map = [Point2(x, y) for x, y in pole_xy]
    observations: List[Tuple[int, int, Point2]] = []
    obs_rng = rngs["observations"]
    obs_info = isotropic_information(max(config.landmark_obs.sigma, SIGMA_FLOOR))
    tree = cKDTree(pole_xy) if len(pole_xy) else None
    for vertex_id, k in enumerate(keyframes):
        if tree is None:
            break
        pose = truth_path[k][1]
        for pole_id in sorted(tree.query_ball_point([pose.x, pose.y], config.landmark_obs.max_range)):
            local = pose.inverse_transform_point(poles_map[pole_id])
            jitter = obs_rng.normal(0.0, 1.0, size=2) * config.landmark_obs.sigma
            meas = Point2(local.x + jitter[0], local.y + jitter[1])
            landmark_id = LANDMARK_ID_OFFSET + pole_id
            if not graph.has_vertex(landmark_id):
                graph.add_landmark(landmark_id, graph.pose(vertex_id).estimate.transform_point(meas),
                                   kinds[pole_id])
            graph.add_edge(LandmarkObsEdge(vertex_id, landmark_id, meas, obs_info))
            observations.append((vertex_id, pole_id, meas))

    if config.loop_closure.enabled:
        _add_loop_closures(graph, truth_path, keyframes, config.loop_closure, rngs["loop_closures"])

    # GPS.
    gps_times = np.arange(0.0, times[-1] + 1e-9, 1.0 / config.gps.rate_hz)
    truth_at_gps = sample_path(truth_path, gps_times)
    gps = simulate_gps(rngs["gps"], np.array([[p.x, p.y] for p in truth_at_gps]), gps_times, config.gps, origin)

    # Aerial tiles and labels, on the absolute UTM grid.
    poles_utm = [(i, Point2(p.x + origin.easting_offset, p.y + origin.northing_offset))
                 for i, p in enumerate(poles_map)]
    world = SimWorld(truth_path, poles_utm, dict(enumerate(kinds)), {}, [], config.aerial.tile_size)
    world.tile_biases = _tile_biases(rngs["tiles"], [world.tile_of(p) for _, p in poles_utm], config.aerial)
    visible = sorted({pole_id for _, pole_id, _ in observations})
    n_labels = int(round(config.aerial.label_fraction * len(visible)))
    label_rng = rngs["labels"]
    chosen = sorted(label_rng.choice(len(visible), size=n_labels, replace=False)) if n_labels else []
    jitter = label_rng.normal(0.0, 1.0, size=(n_labels, 2)) * config.aerial.label_sigma
    for (index, (jx, jy)) in zip(chosen, jitter):
        pole_id = visible[index]
        truth = poles_utm[pole_id][1]
        bias = world.tile_biases[world.tile_of(truth)]
        world.labels.append((pole_id, Point2(truth.x + bias.x + jx, truth.y + bias.y + jy)))

    logger.info(
        f"Simulated {times[-1]:.0f} s drive: {len(keyframes)} keyframes, {len(poles_map)} poles "
        f"({len(visible)} observed, {len(world.labels)} labelled), {len(gps)} GPS fixes "
        f"({sum(f.is_outlier for f in gps)} outliers), {len(world.tile_biases)} aerial tiles"
    )
    return SimResult(config, world, odom, gps, observations, graph, keyframes)


def _add_loop_closures(graph: PoseGraph, truth_path: Sequence[Tuple[float, Pose2]], keyframes: Sequence[int],
                       config: LoopClosureConfig, rng: np.random.Generator) -> int:
    """Relative-pose edges between revisits, one per later keyframe (its closest earlier match).

    Landmark observations already tie the laps of a pole-lined drive together,
    so the drift these edges remove only shows on a world with pole_density=0.
    """
    xy = np.array([[truth_path[k][1].x, truth_path[k][1].y] for k in keyframes])
    times = np.array([truth_path[k][0] for k in keyframes])
    best: Dict[int, Tuple[float, int]] = {}
    for i, j in sorted(cKDTree(xy).query_pairs(config.radius)):
        if times[j] - times[i] < config.min_separation:
            continue
        d = float(np.hypot(*(xy[j] - xy[i])))
        if j not in best or (d, i) < best[j]:
            best[j] = (d, i)

    info = np.diag([1.0 / max(config.sigma_xy, SIGMA_FLOOR) ** 2] * 2
                   + [1.0 / max(config.sigma_theta, SIGMA_FLOOR) ** 2])
    for j in sorted(best):
        i = best[j][1]
        rel = relative_pose(truth_path[keyframes[i]][1], truth_path[keyframes[j]][1])
        n = rng.normal(0.0, 1.0, size=3) * [config.sigma_xy, config.sigma_xy, config.sigma_theta]
        graph.add_edge(RelPoseEdge(i, j, Pose2(rel.x + n[0], rel.y + n[1], rel.theta + n[2]), info))
    logger.info(f"Added {len(best)} loop-closure edges")
    return len(best)


# -----------------------------
# Metrics
# -----------------------------

def drift_of(graph: PoseGraph, truth: Sequence[Pose2]) -> np.ndarray:
    """Per-pose position error after the best rigid fit of the local map onto truth.

    The fit removes the gauge, so what remains is shape distortion.
    """
    poses = [v.estimate for v in graph.poses()]
    if len(poses) != len(truth):
        raise ValueError(f"graph has {len(poses)} poses but truth has {len(truth)}")
    c = CorrespondenceSet(points_to_array([p.translation for p in poses]),
                          points_to_array([p.translation for p in truth]), np.ones(len(poses)))
    aligned, _ = apply_to_map(fit_se2(c), poses, [])
    return np.array([math.hypot(a.x - t.x, a.y - t.y) for a, t in zip(aligned, truth)])


# -----------------------------
# Output
# -----------------------------

def write_outputs(result: SimResult, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Write every simulator artifact into `out_dir`; returns name -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in (
        "graph.g2o", "gps.csv", "odom.csv", "labels.csv", "truth.csv",
        "poles.csv", "pose_times.csv", "scans.csv", "origin.cfg")}

    write_graph(result.initial_graph, paths["graph.g2o"])
    write_gps_csv(paths["gps.csv"], result.gps)
    write_odom_csv(paths["odom.csv"], result.odom)
    write_labels_csv(paths["labels.csv"], result.world.labels)
    write_path_csv(paths["truth.csv"], result.world.truth_path)
    write_pose_times_csv(paths["pose_times.csv"], result.pose_times)
    write_origin(paths["origin.cfg"], result.origin)
    write_table(paths["poles.csv"], pd.DataFrame({
        "pole_id": [i for i, _ in result.world.poles],
        "easting": [p.x for _, p in result.world.poles],
        "northing": [p.y for _, p in result.world.poles],
        "kind": [result.world.pole_kinds[i].value for i, _ in result.world.poles],
    }, columns=["pole_id", "easting", "northing", "kind"]))
    write_table(paths["scans.csv"], pd.DataFrame({
        "pose_id": [v for v, _, _ in result.observations],
        "x": [m.x for _, _, m in result.observations],
        "y": [m.y for _, _, m in result.observations],
        "intensity": [1.0 if result.world.pole_kinds[p] == LandmarkKind.POLE else 0.5
                      for _, p, _ in result.observations],
    }, columns=["pose_id", "x", "y", "intensity"]))
    logger.info(f"Wrote simulation outputs to {out}")
    return paths
