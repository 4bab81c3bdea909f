"""
SE2 geometry and the map-origin / UTM convention.

All values are immutable. Headings are kept in (-pi, pi] after every
operation. The map frame has a constant planar offset from its UTM zone and
no rotation, so moving between the two is a plain addition.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    if -math.pi < angle <= math.pi:
        return float(angle)
    wrapped = math.remainder(angle, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotation_matrix_transpose_derivative(theta: float) -> np.ndarray:
    """d(R(theta)^T)/dtheta."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[-s, c], [-c, -s]])


def _check_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} requires finite components, got {values}")


@dataclass(frozen=True)
class Point2:
    """A planar point in meters."""

    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        _check_finite("Point2", self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Point2":
        return cls(values[0], values[1])

    def distance_to(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Pose2:
    """An SE2 element: translation in meters, heading in radians."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        _check_finite("Pose2", self.x, self.y, self.theta)
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @classmethod
    def identity(cls) -> "Pose2":
        return cls(0.0, 0.0, 0.0)

    @property
    def translation(self) -> Point2:
        return Point2(self.x, self.y)

    def compose(self, other: "Pose2") -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.theta,
        )

    def transform_point(self, q: Point2) -> Point2:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Point2(self.x + c * q.x - s * q.y, self.y + s * q.x + c * q.y)

    def inverse_transform_point(self, q: Point2) -> Point2:
        c, s = math.cos(self.theta), math.sin(self.theta)
        dx, dy = q.x - self.x, q.y - self.y
        return Point2(c * dx + s * dy, -s * dx + c * dy)

    def matrix(self) -> np.ndarray:
        """Homogeneous 3x3 form."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]])

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose2":
        return cls(m[0, 2], m[1, 2], math.atan2(m[1, 0], m[0, 0]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Pose2":
        return cls(values[0], values[1], values[2])


@dataclass(frozen=True)
class MapOrigin:
    """Fixed UTM offset of a map frame. Heading offset is zero by definition."""

    easting_offset: float = 0.0
    northing_offset: float = 0.0
    zone_label: str = "56S"

    def __post_init__(self):
        _check_finite("MapOrigin", self.easting_offset, self.northing_offset)


def compose(a: Pose2, b: Pose2) -> Pose2:
    return a.compose(b)


def inverse(p: Pose2) -> Pose2:
    return p.inverse()


def transform_point(p: Pose2, q: Point2) -> Point2:
    return p.transform_point(q)


def inverse_transform_point(p: Pose2, q: Point2) -> Point2:
    return p.inverse_transform_point(q)


def map_to_utm(q: Point2, origin: MapOrigin) -> Point2:
    return Point2(q.x + origin.easting_offset, q.y + origin.northing_offset)


def utm_to_map(q: Point2, origin: MapOrigin) -> Point2:
    return Point2(q.x - origin.easting_offset, q.y - origin.northing_offset)


def points_to_array(points: Sequence[Point2]) -> np.ndarray:
    if not points:
        return np.zeros((0, 2))
    return np.array([[p.x, p.y] for p in points])


def relative_pose(a: Pose2, b: Pose2) -> Pose2:
    """inverse(a) ⊕ b."""
    return a.inverse().compose(b)
