"""
Place per-pose sensor points into UTM with optimised poses and grid them
into a georeferenced raster that GIS tools can overlay on orthoimagery.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import InputError, ParseError
from fileio import atomic_write_bytes, atomic_write_text, read_table, write_table
from geometry import MapOrigin
from pose_graph import PoseGraph, VertexId

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class ScanFrame:
    """Horizontal points (x, y, intensity) in the sensor frame of one pose."""

    pose_vertex: VertexId
    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if np.any((points[:, 2] < 0) | (points[:, 2] > 1)):
            raise ValueError(f"scan of pose {self.pose_vertex}: intensity must lie in [0, 1]")
        object.__setattr__(self, "points", points)


def project_scans(graph: PoseGraph, scans: Sequence[ScanFrame], origin: MapOrigin) -> np.ndarray:
    """(N, 3) array of easting, northing, intensity in input order."""
    blocks = []
    for scan in scans:
        pose = graph.pose(scan.pose_vertex).estimate
        m = pose.matrix()
        xy = scan.points[:, :2] @ m[:2, :2].T + m[:2, 2]
        xy += [origin.easting_offset, origin.northing_offset]
        blocks.append(np.column_stack([xy, scan.points[:, 2]]))
    if not blocks:
        return np.zeros((0, 3))
    projected = np.vstack(blocks)
    logger.info(f"Projected {len(projected)} points from {len(scans)} scans")
    return projected


@dataclass
class RasterGrid:
    """Max-intensity grid; row 0 is the northern edge."""

    intensity: np.ndarray
    counts: np.ndarray
    cell_size: float
    ul_easting: float
    ul_northing: float

    @property
    def width(self) -> int:
        return self.intensity.shape[1]

    @property
    def height(self) -> int:
        return self.intensity.shape[0]

    def cell_of(self, easting: float, northing: float) -> Tuple[int, int]:
        col = int(np.floor(easting / self.cell_size) - round(self.ul_easting / self.cell_size))
        row = int(round(self.ul_northing / self.cell_size) - 1 - np.floor(northing / self.cell_size))
        return row, col

    def cell_bounds(self, row: int, col: int) -> Tuple[float, float, float, float]:
        """(min_e, max_e, min_n, max_n); min edges inclusive."""
        e0 = self.ul_easting + col * self.cell_size
        n1 = self.ul_northing - row * self.cell_size
        return e0, e0 + self.cell_size, n1 - self.cell_size, n1

    def to_pgm(self) -> bytes:
        """Binary greymap, intensity scaled to 0..255."""
        pixels = np.clip(np.round(self.intensity * 255.0), 0, 255).astype(np.uint8)
        header = f"P5\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + pixels.tobytes()

    def world_file(self) -> str:
        """ESRI world file; references the centre of the upper-left pixel."""
        c = self.cell_size
        return "\n".join(repr(v) for v in (
            c, 0.0, 0.0, -c, self.ul_easting + c / 2.0, self.ul_northing - c / 2.0)) + "\n"

    def sidecar(self) -> pd.DataFrame:
        return pd.DataFrame([(self.cell_size, self.ul_easting, self.ul_northing, self.width, self.height)],
                            columns=["cell_size", "ul_easting", "ul_northing", "width", "height"])

    def write(self, grid_path: PathLike) -> Dict[str, Path]:
        """Write `<stem>.pgm`, `<stem>.csv` sidecar and `<stem>.pgw` world file."""
        grid_path = Path(grid_path)
        paths = {
            "grid": grid_path.with_suffix(".pgm"),
            "sidecar": grid_path.with_suffix(".csv"),
            "world": grid_path.with_suffix(".pgw"),
        }
        atomic_write_bytes(paths["grid"], self.to_pgm())
        write_table(paths["sidecar"], self.sidecar())
        atomic_write_text(paths["world"], self.world_file())
        logger.info(f"Wrote {self.width}x{self.height} raster ({self.cell_size} m cells) to {paths['grid']}")
        return paths


def rasterize(points: np.ndarray, cell_size: float) -> RasterGrid:
    """Grid (easting, northing, intensity) points at `cell_size` meters per cell."""
    if not cell_size > 0:
        raise InputError(f"cell size must be positive, got {cell_size}")
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        raise InputError("cannot rasterize an empty point set")

    ix = np.floor(points[:, 0] / cell_size)
    iy = np.floor(points[:, 1] / cell_size)
    col = (ix - ix.min()).astype(np.int64)
    row = (iy.max() - iy).astype(np.int64)
    height, width = int(row.max()) + 1, int(col.max()) + 1

    intensity = np.zeros((height, width))
    counts = np.zeros((height, width), dtype=np.int64)
    np.maximum.at(intensity, (row, col), points[:, 2])
    np.add.at(counts, (row, col), 1)
    return RasterGrid(intensity, counts, cell_size, float(ix.min() * cell_size), float((iy.max() + 1) * cell_size))


def read_scans(path: PathLike) -> List[ScanFrame]:
    """Scans CSV pose_id,x,y,intensity; consecutive rows of one pose form a frame."""
    table = read_table(path, ["pose_id", "x", "y", "intensity"], integer=["pose_id"])
    if table.empty:
        return []
    bad = np.flatnonzero((table["intensity"] < 0) | (table["intensity"] > 1))
    if len(bad):
        raise ParseError(f"intensity {table['intensity'].iloc[bad[0]]} outside [0, 1]",
                         file=str(path), line=int(bad[0]) + 2, column=4)
    ids = table["pose_id"].to_numpy()
    xyz = table[["x", "y", "intensity"]].to_numpy(dtype=float)
    starts = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]])
    ends = np.r_[starts[1:], len(ids)]
    return [ScanFrame(int(ids[s]), xyz[s:e]) for s, e in zip(starts, ends)]


def write_points_csv(path: PathLike, points: np.ndarray) -> None:
    write_table(path, pd.DataFrame(points, columns=["easting", "northing", "intensity"]))
