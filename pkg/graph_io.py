"""
Text serialisation of PoseGraph (g2o-style dialect).

One record per line, whitespace separated, '#' starts a comment:

    VERTEX_SE2 id x y theta
    VERTEX_XY id x y [kind]
    FIX id
    EDGE_SE2 from to dx dy dtheta i11 i12 i13 i22 i23 i33
    EDGE_SE2_XY pose landmark mx my i11 i12 i22
    EDGE_PRIOR_XY pose mx my i11 i12 i22
    EDGE_ANCHOR_XY landmark mx my i11 i12 i22

Floats are written with 17 significant digits so a write/read cycle is
bit-exact.
"""

import hashlib
import logging
import math
from pathlib import Path
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np

from errors import GeoregError, InputError, ParseError
from fileio import atomic_write_text
from geometry import Point2, Pose2
from pose_graph import (
    AnchorPriorEdge,
    GpsPriorEdge,
    LandmarkKind,
    LandmarkObsEdge,
    PoseGraph,
    RelPoseEdge,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _upper(info: np.ndarray) -> List[float]:
    n = info.shape[0]
    return [info[i, j] for i in range(n) for j in range(i, n)]


def _from_upper(values: Sequence[float], n: int) -> np.ndarray:
    info = np.zeros((n, n))
    k = 0
    for i in range(n):
        for j in range(i, n):
            info[i, j] = info[j, i] = values[k]
            k += 1
    return info


# -----------------------------
# Writing
# -----------------------------

def dumps(graph: PoseGraph) -> str:
    """Canonical text: vertices in insertion order, FIX lines, then edges in order."""
    lines: List[str] = []
    for v in graph.poses():
        e = v.estimate
        lines.append(f"VERTEX_SE2 {v.id} {_fmt(e.x)} {_fmt(e.y)} {_fmt(e.theta)}")
    for v in graph.landmarks():
        e = v.estimate
        lines.append(f"VERTEX_XY {v.id} {_fmt(e.x)} {_fmt(e.y)} {v.kind.value}")
    for vertex_id in graph.fixed_ids():
        lines.append(f"FIX {vertex_id}")
    for edge in graph.iter_edges():
        info = " ".join(_fmt(x) for x in _upper(edge.info))
        m = edge.meas
        if isinstance(edge, RelPoseEdge):
            lines.append(f"EDGE_SE2 {edge.from_id} {edge.to_id} {_fmt(m.x)} {_fmt(m.y)} {_fmt(m.theta)} {info}")
        elif isinstance(edge, LandmarkObsEdge):
            lines.append(f"EDGE_SE2_XY {edge.pose_id} {edge.landmark_id} {_fmt(m.x)} {_fmt(m.y)} {info}")
        elif isinstance(edge, GpsPriorEdge):
            lines.append(f"EDGE_PRIOR_XY {edge.pose_id} {_fmt(m.x)} {_fmt(m.y)} {info}")
        elif isinstance(edge, AnchorPriorEdge):
            lines.append(f"EDGE_ANCHOR_XY {edge.landmark_id} {_fmt(m.x)} {_fmt(m.y)} {info}")
    return "\n".join(lines) + "\n"


def write_graph(graph: PoseGraph, path: PathLike) -> None:
    atomic_write_text(path, dumps(graph))
    logger.info(f"Wrote graph with {len(graph)} vertices and {len(graph.edges)} edges to {path}")


def graph_digest(graph: PoseGraph) -> str:
    """sha256 of the canonical text form."""
    return hashlib.sha256(dumps(graph).encode("utf-8")).hexdigest()


# -----------------------------
# Reading
# -----------------------------

class _Line:
    """Tokenised record that knows where each token starts for error reports."""

    def __init__(self, text: str, file: str, line_no: int):
        self.file = file
        self.line_no = line_no
        self.tokens: List[Tuple[str, int]] = []
        column = 0
        for part in text.split():
            column = text.index(part, column)
            self.tokens.append((part, column + 1))
            column += len(part)

    def error(self, message: str, index: int) -> ParseError:
        column = self.tokens[index][1] if index < len(self.tokens) else (
            self.tokens[-1][1] + len(self.tokens[-1][0]) if self.tokens else 1)
        return ParseError(message, file=self.file, line=self.line_no, column=column)

    def expect(self, count: Sequence[int]) -> None:
        n = len(self.tokens) - 1
        if n not in count:
            expected = " or ".join(str(c) for c in count)
            raise self.error(f"{self.tokens[0][0]} expects {expected} fields, got {n}", min(len(self.tokens), max(count) + 1))

    def _convert(self, index: int, convert: Callable, what: str):
        token = self.tokens[index][0]
        try:
            value = convert(token)
        except ValueError:
            raise self.error(f"expected {what}, got {token!r}", index) from None
        if isinstance(value, float) and not math.isfinite(value):
            raise self.error(f"non-finite value {token!r}", index)
        return value

    def as_int(self, index: int) -> int:
        return self._convert(index, int, "an integer vertex id")

    def as_float(self, index: int) -> float:
        return self._convert(index, float, "a number")

    def floats(self, start: int, count: int) -> List[float]:
        return [self.as_float(i) for i in range(start, start + count)]


def loads(text: str, source: str = "<string>") -> PoseGraph:
    """Parse the text format. Errors name file, line and column of the bad token."""
    graph = PoseGraph()
    pending_edges: List[Tuple[_Line, object]] = []
    fixes: List[Tuple[_Line, int]] = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0]
        if not content.strip():
            continue
        rec = _Line(content, source, line_no)
        tag = rec.tokens[0][0]
        try:
            if tag == "VERTEX_SE2":
                rec.expect([4])
                graph.add_pose(rec.as_int(1), Pose2(*rec.floats(2, 3)))
            elif tag == "VERTEX_XY":
                rec.expect([3, 4])
                kind = LandmarkKind.POLE
                if len(rec.tokens) == 5:
                    try:
                        kind = LandmarkKind(rec.tokens[4][0])
                    except ValueError:
                        raise rec.error(f"unknown landmark kind {rec.tokens[4][0]!r}", 4) from None
                graph.add_landmark(rec.as_int(1), Point2(*rec.floats(2, 2)), kind)
            elif tag == "FIX":
                rec.expect([1])
                fixes.append((rec, rec.as_int(1)))
            elif tag == "EDGE_SE2":
                rec.expect([11])
                meas = Pose2(*rec.floats(3, 3))
                pending_edges.append((rec, RelPoseEdge(rec.as_int(1), rec.as_int(2), meas, _from_upper(rec.floats(6, 6), 3))))
            elif tag == "EDGE_SE2_XY":
                rec.expect([7])
                meas = Point2(*rec.floats(3, 2))
                pending_edges.append((rec, LandmarkObsEdge(rec.as_int(1), rec.as_int(2), meas, _from_upper(rec.floats(5, 3), 2))))
            elif tag == "EDGE_PRIOR_XY":
                rec.expect([6])
                meas = Point2(*rec.floats(2, 2))
                pending_edges.append((rec, GpsPriorEdge(rec.as_int(1), meas, _from_upper(rec.floats(4, 3), 2))))
            elif tag == "EDGE_ANCHOR_XY":
                rec.expect([6])
                meas = Point2(*rec.floats(2, 2))
                pending_edges.append((rec, AnchorPriorEdge(rec.as_int(1), meas, _from_upper(rec.floats(4, 3), 2))))
            else:
                raise rec.error(f"unknown record type {tag!r}", 0)
        except ParseError:
            raise
        except GeoregError as exc:
            raise rec.error(exc.message, 1) from exc

    # Vertices may be declared after the edges that use them.
    for rec, vertex_id in fixes:
        try:
            graph.fix(vertex_id)
        except GeoregError as exc:
            raise rec.error(exc.message, 1) from exc
    for rec, edge in pending_edges:
        try:
            graph.add_edge(edge)
        except GeoregError as exc:
            raise rec.error(exc.message, 1) from exc

    logger.debug(f"Parsed {source}: {len(graph)} vertices, {len(graph.edges)} edges")
    return graph


def read_graph(path: PathLike) -> PoseGraph:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read graph file: {exc}", file=str(path)) from exc
    graph = loads(text, source=str(path))
    logger.info(f"Loaded graph {path}: {len(graph.poses())} poses, {len(graph.landmarks())} landmarks, "
                f"{len(graph.edges)} edges")
    return graph
