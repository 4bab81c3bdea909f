"""
Unscented Kalman filter fusing wheel/IMU dead reckoning with GPS fixes.

The state is (x, y, theta) in the map frame; forward speed and yaw rate are
control inputs rather than states. GPS fixes are moved into the map frame,
gated with a chi-square test on the innovation and only then applied.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Deque, List, Optional, Sequence, Tuple

import numpy as np
from filterpy.kalman import MerweScaledSigmaPoints, unscented_transform
from pydantic import BaseModel, Field
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.stats import chi2

from errors import ConfigError, CovarianceError, DegenerateAlignmentError, InputError, OrderingError
from geometry import MapOrigin, Point2, Pose2, normalize_angle, utm_to_map
from pose_graph import DEFAULT_GPS_SIGMA

logger = logging.getLogger(__name__)

STATE_DIM = 3
HEADING_BASELINE = 5.0
HEADING_SIGMA_FLOOR = 0.1
MIN_TRACK_FIXES = 5
MAX_TRACK_FIXES = 60


# -----------------------------
# Data types
# -----------------------------

@dataclass(frozen=True)
class GpsFix:
    """UTM position fix. nominal_sigma <= 0 means "use the configured default"."""

    t: float
    easting: float
    northing: float
    nominal_sigma: float = 0.0
    is_outlier: bool = False

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.t, self.easting, self.northing, self.nominal_sigma)):
            raise ValueError(f"GpsFix requires finite fields, got {self}")

    @property
    def position(self) -> Point2:
        return Point2(self.easting, self.northing)


@dataclass(frozen=True)
class OdomSample:
    t: float
    v: float
    omega: float


@dataclass(frozen=True, eq=False)
class FilterState:
    t: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        mean[2] = normalize_angle(mean[2])
        cov = np.array(self.cov, dtype=float)
        if mean.shape != (STATE_DIM,) or cov.shape != (STATE_DIM, STATE_DIM):
            raise ValueError("FilterState needs a 3-vector mean and a 3x3 covariance")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def pose(self) -> Pose2:
        return Pose2.from_array(self.mean)


@dataclass(frozen=True)
class GateDecision:
    fix: GpsFix
    mahalanobis_sq: float
    threshold: float
    accepted: bool


class FilterConfig(BaseModel):
    """Sigma-point spread, process noise and measurement gating."""

    alpha: float = Field(0.1, gt=0.0)
    beta: float = 2.0
    kappa: float = 0.0
    sigma_v: float = Field(0.1, ge=0.0)
    sigma_omega: float = Field(0.02, ge=0.0)
    gps_sigma: float = Field(DEFAULT_GPS_SIGMA, gt=0.0)
    gate_confidence: float = Field(0.95, gt=0.0, lt=1.0)
    # Consecutive rejections before re-placing the filter on recent fixes; 0 never does.
    reinit_after: int = Field(10, ge=0)
    # Extent, in fix sigmas, a fix window must span before it may set the heading.
    init_baseline_sigmas: float = Field(10.0, gt=0.0)

    def process_noise(self) -> np.ndarray:
        """Noise density; multiplied by dt at every prediction."""
        return np.diag([self.sigma_v ** 2, self.sigma_v ** 2, self.sigma_omega ** 2])


# -----------------------------
# Models
# -----------------------------

def motion_model(x: np.ndarray, v: float, omega: float, dt: float) -> np.ndarray:
    """Midpoint-heading unicycle step."""
    heading = x[2] + 0.5 * omega * dt
    return np.array([
        x[0] + v * dt * math.cos(heading),
        x[1] + v * dt * math.sin(heading),
        normalize_angle(x[2] + omega * dt),
    ])


def dead_reckon(odom: Sequence[OdomSample], start: Pose2, t0: Optional[float] = None) -> List[Tuple[float, Pose2]]:
    """Integrate the motion model alone, holding each control until the next sample.

    Returns one pose per odometry timestamp; the first is `start` when
    `t0` is the first sample time.
    """
    if not odom:
        return []
    t = odom[0].t if t0 is None else t0
    x = start.as_array()
    control = OdomSample(t, 0.0, 0.0)
    path: List[Tuple[float, Pose2]] = []
    for sample in odom:
        x = motion_model(x, control.v, control.omega, sample.t - t)
        t = sample.t
        control = sample
        path.append((t, Pose2.from_array(x)))
    return path


def _state_mean(sigmas: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted mean with the heading averaged on the circle around the first sigma point."""
    mean = weights @ sigmas
    ref = sigmas[0, 2]
    offsets = np.array([normalize_angle(a - ref) for a in sigmas[:, 2]])
    mean[2] = normalize_angle(ref + weights @ offsets)
    return mean


def _state_residual(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    d[2] = normalize_angle(d[2])
    return d


def _symmetrize(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + cov.T)


def make_sigma_points(config: FilterConfig) -> MerweScaledSigmaPoints:
    return MerweScaledSigmaPoints(STATE_DIM, alpha=config.alpha, beta=config.beta, kappa=config.kappa,
                                  subtract=_state_residual)


def _sigmas(points: MerweScaledSigmaPoints, state: FilterState, what: str) -> np.ndarray:
    try:
        return points.sigma_points(np.array(state.mean), np.array(state.cov))
    except LinAlgError as exc:
        raise CovarianceError(f"Cholesky of the {what} covariance failed at t={state.t}: not positive definite",
                              t=state.t) from exc


def _check_pd(cov: np.ndarray, what: str, t: float) -> None:
    try:
        cho_factor(cov)
    except LinAlgError as exc:
        raise CovarianceError(f"{what} covariance lost positive definiteness at t={t}", t=t) from exc


def fix_sigma(fix: GpsFix, default: float = DEFAULT_GPS_SIGMA) -> float:
    return fix.nominal_sigma if fix.nominal_sigma > 0 else default


@lru_cache(maxsize=None)
def chi2_gate_threshold(confidence: float, dof: int = 2) -> float:
    """Squared-Mahalanobis acceptance bound for the given confidence."""
    if not 0.0 < confidence < 1.0:
        raise ConfigError(f"gate confidence must lie in (0, 1), got {confidence}", key="gate_confidence")
    return float(chi2.ppf(confidence, dof))


# -----------------------------
# Filter steps
# -----------------------------

def predict(state: FilterState, u: OdomSample, dt: float, config: Optional[FilterConfig] = None,
            points: Optional[MerweScaledSigmaPoints] = None) -> FilterState:
    """Propagate mean and covariance through the motion model for `dt` seconds."""
    if dt < 0:
        raise InputError(f"cannot predict backwards in time (dt={dt})", t=state.t)
    if dt == 0:
        return state
    config = config or FilterConfig()
    points = points or make_sigma_points(config)

    sigmas = _sigmas(points, state, "prior")
    propagated = np.array([motion_model(s, u.v, u.omega, dt) for s in sigmas])
    mean, cov = unscented_transform(propagated, points.Wm, points.Wc, config.process_noise() * dt,
                                    mean_fn=_state_mean, residual_fn=_state_residual)
    cov = _symmetrize(cov)
    _check_pd(cov, "predicted", state.t + dt)
    return FilterState(state.t + dt, mean, cov)


def update(state: FilterState, fix: GpsFix, gate_confidence: float = 0.95,
           config: Optional[FilterConfig] = None, origin: Optional[MapOrigin] = None,
           points: Optional[MerweScaledSigmaPoints] = None) -> Tuple[FilterState, GateDecision]:
    """Gate a GPS fix and, if it passes, apply the measurement h(x) = (x, y).

    A rejected fix returns the very same state object.
    """
    config = config or FilterConfig()
    origin = origin or MapOrigin()
    points = points or make_sigma_points(config)
    threshold = chi2_gate_threshold(gate_confidence)

    z = utm_to_map(fix.position, origin).as_array()
    sigma = fix_sigma(fix, config.gps_sigma)
    r = np.eye(2) * sigma * sigma

    sigmas = _sigmas(points, state, "prior")
    z_sigmas = sigmas[:, :2]
    z_mean, s = unscented_transform(z_sigmas, points.Wm, points.Wc, r)
    s = _symmetrize(s)
    nu = z - z_mean
    try:
        s_factor = cho_factor(s)
    except LinAlgError as exc:
        raise CovarianceError(f"innovation covariance is not invertible at t={fix.t}", t=fix.t) from exc
    d2 = float(nu @ cho_solve(s_factor, nu))
    decision = GateDecision(fix, d2, threshold, d2 <= threshold)
    if not decision.accepted:
        return state, decision

    mean = np.array(state.mean)
    cross = np.zeros((STATE_DIM, 2))
    for w, x_sigma, z_sigma in zip(points.Wc, sigmas, z_sigmas):
        cross += w * np.outer(_state_residual(x_sigma, mean), z_sigma - z_mean)
    gain = cho_solve(s_factor, cross.T).T
    mean = mean + gain @ nu
    cov = _symmetrize(np.array(state.cov) - gain @ s @ gain.T)
    _check_pd(cov, "updated", state.t)
    return FilterState(state.t, mean, cov), decision


# -----------------------------
# Track placement
# -----------------------------

@dataclass(frozen=True)
class TrackFit:
    """Rigid placement of an odometry-relative track onto its GPS fixes."""

    transform: Pose2
    heading_var: float
    noise: float
    centroid: Point2
    used: int

    def position_var(self, local: Point2) -> float:
        """Variance of a placed track point: fix noise plus the heading lever arm."""
        return self.noise ** 2 + local.distance_to(self.centroid) ** 2 * self.heading_var


def _extent(points: np.ndarray) -> float:
    if len(points) == 0:
        return 0.0
    return float(np.hypot(*np.ptp(points, axis=0)))


def _place(transform: Pose2, points: np.ndarray) -> np.ndarray:
    return points @ transform.matrix()[:2, :2].T + np.array([transform.x, transform.y])


def fit_track(local: np.ndarray, fixes: np.ndarray, sigma: float, baseline: float) -> Optional[TrackFit]:
    """Place a dead-reckoned track on map-frame fixes, or None when the window cannot pin the heading.

    Pairs whose distance to the newest pair disagrees between track and
    fixes by more than three fix sigmas are dropped first; pairs with a
    larger residual after a first fit are dropped before the final one.
    The survivors must number at least MIN_TRACK_FIXES and span `baseline`
    meters. The heading variance is the fix noise over the track's spread,
    with the noise taken from the residuals when they exceed `sigma`.
    """
    from rigid_align import CorrespondenceSet, fit_se2

    local = np.asarray(local, dtype=float).reshape(-1, 2)
    fixes = np.asarray(fixes, dtype=float).reshape(-1, 2)
    if len(local) < MIN_TRACK_FIXES:
        return None
    tolerance = 3.0 * math.sqrt(2.0) * sigma

    def fit(keep: np.ndarray) -> Optional[Pose2]:
        if keep.sum() < MIN_TRACK_FIXES or _extent(local[keep]) < baseline:
            return None
        try:
            return fit_se2(CorrespondenceSet(local[keep], fixes[keep], np.ones(int(keep.sum()))), min_rank=1)
        except DegenerateAlignmentError:
            return None

    keep = np.abs(np.hypot(*(fixes - fixes[-1]).T) - np.hypot(*(local - local[-1]).T)) <= tolerance
    transform = fit(keep)
    if transform is None:
        return None
    keep = np.hypot(*(_place(transform, local) - fixes).T) <= tolerance
    transform = fit(keep)
    if transform is None:
        return None

    residual = np.hypot(*(_place(transform, local[keep]) - fixes[keep]).T)
    noise = max(sigma, float(np.sqrt(np.mean(residual ** 2) / 2.0)))
    centroid = local[keep].mean(axis=0)
    spread = float(np.sum((local[keep] - centroid) ** 2))
    return TrackFit(transform, noise ** 2 / spread, noise, Point2(float(centroid[0]), float(centroid[1])),
                    int(keep.sum()))


# -----------------------------
# Stream driver
# -----------------------------

def initial_state_from_fixes(fixes: Sequence[GpsFix], origin: Optional[MapOrigin] = None,
                             heading: Optional[float] = None, t: Optional[float] = None,
                             default_sigma: float = DEFAULT_GPS_SIGMA,
                             heading_sigma: float = HEADING_SIGMA_FLOOR,
                             odom: Optional[Sequence[OdomSample]] = None,
                             baseline_sigmas: float = 10.0) -> FilterState:
    """Start the filter from GPS.

    With odometry and no explicit heading, the track dead-reckoned from `t`
    (default: the first odometry time) is placed on the earliest window of
    fixes spanning `baseline_sigmas` fix sigmas, and the state is that
    placement at `t`. Otherwise, or when no window qualifies, the filter
    starts at the first fix with the heading of the displacement to the
    first fix at least 5 m away; its sigma is at least the angle two fixes
    of that quality can subtend over the baseline, and pi when no such fix
    exists.
    """
    if not fixes:
        raise InputError("cannot initialise the filter without GPS fixes")
    origin = origin or MapOrigin()

    if heading is None and odom:
        t0 = odom[0].t if t is None else t
        placed = _state_from_track(fixes, odom, origin, t0, default_sigma, heading_sigma, baseline_sigmas)
        if placed is not None:
            return placed
        logger.warning("No GPS window spans enough ground to place the odometry track; "
                       "taking the heading from two fixes")

    first = fixes[0]
    start = utm_to_map(first.position, origin)
    sigma = fix_sigma(first, default_sigma)

    if heading is None:
        heading, heading_var = 0.0, math.pi ** 2
        for fix in fixes[1:]:
            point = utm_to_map(fix.position, origin)
            baseline = start.distance_to(point)
            if baseline >= HEADING_BASELINE:
                heading = math.atan2(point.y - start.y, point.x - start.x)
                spread = math.sqrt(2.0) * sigma / baseline
                heading_var = min(max(heading_sigma, spread), math.pi) ** 2
                break
    else:
        heading_var = heading_sigma ** 2

    return FilterState(first.t if t is None else t, np.array([start.x, start.y, heading]),
                       np.diag([sigma ** 2, sigma ** 2, heading_var]))


def _state_from_track(fixes: Sequence[GpsFix], odom: Sequence[OdomSample], origin: MapOrigin, t0: float,
                      default_sigma: float, heading_sigma: float, baseline_sigmas: float) -> Optional[FilterState]:
    track = dead_reckon([s for s in odom if s.t >= t0], Pose2.identity(), t0)
    if not track or track[0][0] > t0:
        track.insert(0, (t0, Pose2.identity()))
    usable = [f for f in fixes if t0 <= f.t <= track[-1][0]]
    if len(usable) < MIN_TRACK_FIXES:
        return None
    local = np.array([[p.x, p.y] for p in sample_path(track, [f.t for f in usable])])
    global_ = np.array([utm_to_map(f.position, origin).as_array() for f in usable])
    sigmas = np.array([fix_sigma(f, default_sigma) for f in usable])

    for end in range(MIN_TRACK_FIXES, len(usable) + 1):
        begin = max(0, end - MAX_TRACK_FIXES)
        sigma = float(np.median(sigmas[begin:end]))
        baseline = baseline_sigmas * sigma
        if _extent(local[begin:end]) < baseline:
            continue
        fit = fit_track(local[begin:end], global_[begin:end], sigma, baseline)
        if fit is None:
            continue
        start = fit.transform
        position_var = fit.position_var(Point2(0.0, 0.0))
        heading_var = min(max(heading_sigma ** 2, fit.heading_var), math.pi ** 2)
        logger.info(f"Initial state from {fit.used} fixes up to t={usable[end - 1].t}: "
                    f"heading {start.theta:.3f} rad (sd {math.sqrt(heading_var):.3f})")
        return FilterState(t0, start.as_array(), np.diag([position_var, position_var, heading_var]))
    return None


def _reinitialise(state: FilterState, streak: Sequence[Tuple[np.ndarray, np.ndarray, float]],
                  config: FilterConfig) -> Optional[FilterState]:
    """Re-place the filter on a run of rejected fixes that agree with its own odometry track."""
    local = np.array([p for p, _, _ in streak])
    fixes = np.array([z for _, z, _ in streak])
    sigma = float(np.median([s for _, _, s in streak]))
    fit = fit_track(local, fixes, sigma, config.init_baseline_sigmas * sigma)
    if fit is None:
        return None
    pose = fit.transform.compose(state.pose)
    position_var = fit.position_var(state.pose.translation)
    heading_var = min(max(HEADING_SIGMA_FLOOR ** 2, fit.heading_var), math.pi ** 2)
    return FilterState(state.t, pose.as_array(), np.diag([position_var, position_var, heading_var]))


def run_filter(odom: Sequence[OdomSample], gps: Sequence[GpsFix], init: FilterState,
               config: Optional[FilterConfig] = None,
               origin: Optional[MapOrigin] = None) -> Tuple[List[Tuple[float, Pose2]], List[GateDecision]]:
    """Merge both streams by time and return the pose at every odometry timestamp.

    GPS fixes are applied before an odometry sample with the same timestamp.
    Each control is held until the next odometry sample. Events before the
    initial state's time are skipped.

    After `config.reinit_after` consecutive rejections the filter tries to
    re-place itself on those fixes (see fit_track). Their decisions stay
    rejected.
    """
    config = config or FilterConfig()
    origin = origin or MapOrigin()
    _check_sorted([s.t for s in odom], "odometry")
    _check_sorted([f.t for f in gps], "gps")

    points = make_sigma_points(config)
    events = sorted(
        [(f.t, 0, i) for i, f in enumerate(gps)] + [(s.t, 1, i) for i, s in enumerate(odom)]
    )

    state = init
    control = OdomSample(init.t, 0.0, 0.0)
    path: List[Tuple[float, Pose2]] = []
    decisions: List[GateDecision] = []
    streak: Deque[Tuple[np.ndarray, np.ndarray, float]] = deque(maxlen=MAX_TRACK_FIXES)
    skipped = 0
    reinitialised = 0
    for t, kind, i in events:
        if t < init.t:
            skipped += 1
            continue
        state = predict(state, control, t - state.t, config, points)
        state = replace(state, t=t)
        if kind == 0:
            fix = gps[i]
            state, decision = update(state, fix, config.gate_confidence, config, origin, points)
            decisions.append(decision)
            if decision.accepted:
                streak.clear()
                continue
            logger.debug(f"Rejected GPS fix at t={t}: d2={decision.mahalanobis_sq:.1f} > {decision.threshold:.3f}")
            streak.append((np.array(state.mean[:2]), utm_to_map(fix.position, origin).as_array(),
                           fix_sigma(fix, config.gps_sigma)))
            if config.reinit_after and len(streak) >= config.reinit_after:
                recovered = _reinitialise(state, streak, config)
                if recovered is not None:
                    logger.warning(f"Re-initialised the filter at t={t} after {len(streak)} consecutive "
                                   f"rejections; moved {state.pose.translation.distance_to(recovered.pose.translation):.1f} m")
                    state = recovered
                    reinitialised += 1
                    streak.clear()
        else:
            control = odom[i]
            path.append((t, state.pose))

    rejected = sum(1 for d in decisions if not d.accepted)
    if skipped:
        logger.warning(f"Skipped {skipped} events before the initial state time {init.t}")
    if rejected:
        logger.warning(f"Chi-square gate rejected {rejected} of {len(decisions)} GPS fixes")
    if reinitialised:
        logger.warning(f"Filter re-initialised {reinitialised} times from consistent rejected fixes")
    logger.info(f"Filtered {len(odom)} odometry samples and {len(gps)} GPS fixes")
    return path, decisions


def _check_sorted(times: Sequence[float], stream: str) -> None:
    for record in range(1, len(times)):
        if not times[record] > times[record - 1]:
            raise OrderingError(
                f"{stream} stream is not strictly increasing at record {record} "
                f"(t={times[record]} after {times[record - 1]})",
                stream=stream, record=record,
            )


def sample_path(path: Sequence[Tuple[float, Pose2]], times: Sequence[float]) -> List[Pose2]:
    """Pose of a timed path at arbitrary times: linear in position, shortest arc in heading, clamped at the ends."""
    if not path:
        raise InputError("cannot sample an empty path")
    t = np.array([p[0] for p in path])
    xy = np.array([[p.x, p.y] for _, p in path])
    theta = np.unwrap([p.theta for _, p in path])
    query = np.asarray(times, dtype=float)
    xs = np.interp(query, t, xy[:, 0])
    ys = np.interp(query, t, xy[:, 1])
    ths = np.interp(query, t, theta)
    return [Pose2(x, y, th) for x, y, th in zip(xs, ys, ths)]
