"""
File helpers shared by every subcommand: atomic writes, validated CSV tables
and the plain-text key=value configuration format.
"""

import logging
import os
import re
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Type, TypeVar, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from errors import ConfigError, InputError, OrderingError, ParseError
from geometry import MapOrigin, Point2, Pose2
from gps_filter import GateDecision, GpsFix, OdomSample

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
ModelT = TypeVar("ModelT", bound=BaseModel)


# -----------------------------
# Atomic writes
# -----------------------------

def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    """Write to a temp file next to `path`, then rename over it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_table(path: PathLike, frame: pd.DataFrame) -> None:
    atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))
    logger.debug(f"Wrote {len(frame)} rows to {path}")


# -----------------------------
# CSV tables
# -----------------------------

_TOKENIZE_LINE = re.compile(r"Expected (\d+) fields in line (\d+)")


def read_table(path: PathLike, columns: Sequence[str], optional: Sequence[str] = (),
               integer: Sequence[str] = ()) -> pd.DataFrame:
    """Read a CSV and return the requested columns as finite numbers.

    Parse failures raise ParseError with the file, the 1-based line and the
    1-based field position of the offending cell.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file does not exist: {path}", file=str(path))
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty, expected a header row", file=str(path), line=1, column=1) from None
    except pd.errors.ParserError as exc:
        match = _TOKENIZE_LINE.search(str(exc))
        line, column = (int(match.group(2)), int(match.group(1)) + 1) if match else (None, None)
        raise ParseError(f"malformed CSV row: {exc}", file=str(path), line=line, column=column) from None

    header = [c.strip() for c in raw.columns]
    raw.columns = header
    for name in columns:
        if name not in header:
            raise ParseError(f"missing column {name!r} (header is {','.join(header)})",
                             file=str(path), line=1, column=len(header) + 1)

    out = pd.DataFrame(index=raw.index)
    for name in list(columns) + [c for c in optional if c in header]:
        values = pd.to_numeric(raw[name].str.strip(), errors="coerce")
        bad = ~np.isfinite(values.to_numpy(dtype=float))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise ParseError(f"column {name!r}: expected a finite number, got {raw[name].iloc[row]!r}",
                             file=str(path), line=row + 2, column=header.index(name) + 1)
        if name in integer:
            if not np.all(values == np.round(values)):
                row = int(np.flatnonzero(values != np.round(values))[0])
                raise ParseError(f"column {name!r}: expected an integer, got {raw[name].iloc[row]!r}",
                                 file=str(path), line=row + 2, column=header.index(name) + 1)
            values = values.astype(np.int64)
        out[name] = values
    return out


def check_increasing(times: Sequence[float], stream: str) -> None:
    """Raise OrderingError at the first record whose time does not increase."""
    t = np.asarray(times, dtype=float)
    if len(t) < 2:
        return
    bad = np.flatnonzero(np.diff(t) <= 0.0)
    if len(bad):
        record = int(bad[0]) + 1
        raise OrderingError(
            f"{stream}: timestamp {t[record]!r} at record {record} does not increase on {t[record - 1]!r}",
            stream=stream, record=record,
        )


# -----------------------------
# Domain tables
# -----------------------------

def read_gps_csv(path: PathLike) -> List[GpsFix]:
    """GPS fixes: t,easting,northing,sigma[,is_outlier]."""
    table = read_table(path, ["t", "easting", "northing", "sigma"], optional=["is_outlier"])
    check_increasing(table["t"], f"gps ({path})")
    flags = table["is_outlier"] if "is_outlier" in table else pd.Series(0, index=table.index)
    fixes = [GpsFix(float(t), float(e), float(n), float(s), bool(o))
             for t, e, n, s, o in zip(table["t"], table["easting"], table["northing"], table["sigma"], flags)]
    logger.info(f"Read {len(fixes)} GPS fixes from {path}")
    return fixes


def write_gps_csv(path: PathLike, fixes: Sequence[GpsFix]) -> None:
    write_table(path, pd.DataFrame({
        "t": [f.t for f in fixes],
        "easting": [f.easting for f in fixes],
        "northing": [f.northing for f in fixes],
        "sigma": [f.nominal_sigma for f in fixes],
        "is_outlier": [int(f.is_outlier) for f in fixes],
    }, columns=["t", "easting", "northing", "sigma", "is_outlier"]))


def read_odom_csv(path: PathLike) -> List[OdomSample]:
    table = read_table(path, ["t", "v", "omega"])
    check_increasing(table["t"], f"odometry ({path})")
    samples = [OdomSample(float(t), float(v), float(w)) for t, v, w in zip(table["t"], table["v"], table["omega"])]
    logger.info(f"Read {len(samples)} odometry samples from {path}")
    return samples


def write_odom_csv(path: PathLike, samples: Sequence[OdomSample]) -> None:
    write_table(path, pd.DataFrame({
        "t": [s.t for s in samples],
        "v": [s.v for s in samples],
        "omega": [s.omega for s in samples],
    }, columns=["t", "v", "omega"]))


def read_path_csv(path: PathLike) -> List[Tuple[float, Pose2]]:
    """Timed poses: t,x,y,theta (filtered path or ground truth)."""
    table = read_table(path, ["t", "x", "y", "theta"])
    check_increasing(table["t"], f"path ({path})")
    return [(float(t), Pose2(x, y, th)) for t, x, y, th in zip(table["t"], table["x"], table["y"], table["theta"])]


def write_path_csv(path: PathLike, poses: Sequence[Tuple[float, Pose2]]) -> None:
    write_table(path, pd.DataFrame({
        "t": [t for t, _ in poses],
        "x": [p.x for _, p in poses],
        "y": [p.y for _, p in poses],
        "theta": [p.theta for _, p in poses],
    }, columns=["t", "x", "y", "theta"]))


def write_decisions_csv(path: PathLike, decisions: Sequence[GateDecision]) -> None:
    write_table(path, pd.DataFrame({
        "t": [d.fix.t for d in decisions],
        "easting": [d.fix.easting for d in decisions],
        "northing": [d.fix.northing for d in decisions],
        "d2": [d.mahalanobis_sq for d in decisions],
        "threshold": [d.threshold for d in decisions],
        "accepted": [int(d.accepted) for d in decisions],
    }, columns=["t", "easting", "northing", "d2", "threshold", "accepted"]))


def read_decisions_csv(path: PathLike, fixes: Sequence[GpsFix]) -> List[GateDecision]:
    """Re-attach stored gate outcomes to the fixes they were made for (matched on t)."""
    table = read_table(path, ["t", "easting", "northing", "d2", "threshold", "accepted"], integer=["accepted"])
    by_time = {f.t: f for f in fixes}
    decisions = []
    for row, (t, d2, threshold, accepted) in enumerate(
            zip(table["t"], table["d2"], table["threshold"], table["accepted"])):
        if float(t) not in by_time:
            raise ParseError(f"decision at t={t!r} has no matching GPS fix", file=str(path), line=row + 2, column=1)
        decisions.append(GateDecision(by_time[float(t)], float(d2), float(threshold), bool(accepted)))
    return decisions


def read_labels_csv(path: PathLike) -> List[Tuple[int, Point2]]:
    """Aerial labels: pole_id,easting,northing (UTM)."""
    table = read_table(path, ["pole_id", "easting", "northing"], integer=["pole_id"])
    labels = [(int(i), Point2(e, n)) for i, e, n in zip(table["pole_id"], table["easting"], table["northing"])]
    logger.info(f"Read {len(labels)} aerial labels from {path}")
    return labels


def write_labels_csv(path: PathLike, labels: Sequence[Tuple[int, Point2]]) -> None:
    write_table(path, pd.DataFrame({
        "pole_id": [i for i, _ in labels],
        "easting": [p.x for _, p in labels],
        "northing": [p.y for _, p in labels],
    }, columns=["pole_id", "easting", "northing"]))


def read_pose_times_csv(path: PathLike) -> List[Tuple[int, float]]:
    """Keyframe timestamps: pose_id,t in traversal order."""
    table = read_table(path, ["pose_id", "t"], integer=["pose_id"])
    check_increasing(table["t"], f"pose times ({path})")
    return [(int(i), float(t)) for i, t in zip(table["pose_id"], table["t"])]


def write_pose_times_csv(path: PathLike, pose_times: Sequence[Tuple[int, float]]) -> None:
    write_table(path, pd.DataFrame({
        "pose_id": [i for i, _ in pose_times],
        "t": [t for _, t in pose_times],
    }, columns=["pose_id", "t"]))


# -----------------------------
# key=value configuration
# -----------------------------

def _parse_value(raw: str) -> Any:
    """Comma lists become lists; `a:b` pairs become tuples; the rest stays text for pydantic."""
    raw = raw.strip()
    if "," not in raw and ":" not in raw:
        return raw
    items = [item.strip() for item in raw.split(",") if item.strip()]
    return [tuple(p.strip() for p in item.split(":")) if ":" in item else item for item in items]


def parse_kv_text(text: str, source: str = "<string>") -> Dict[str, Any]:
    """Flat mapping of dotted keys to parsed values. '#' starts a comment."""
    values: Dict[str, Any] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0]
        if not content.strip():
            continue
        if "=" not in content:
            column = len(content) - len(content.lstrip()) + 1
            raise ParseError("expected key = value", file=source, line=line_no, column=column)
        key, value = content.split("=", 1)
        key = key.strip()
        if not key:
            raise ParseError("empty key", file=source, line=line_no, column=1)
        values[key] = _parse_value(value)
    return values


def read_kv_file(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_kv_text(text, source=str(path))


def _nest(flat: Mapping[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        node = nested
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"key {key!r} conflicts with scalar {part!r}", key=key)
            node = child
        node[parts[-1]] = value
    return nested


def _merge(base: Dict[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def build_config(model: Type[ModelT], path: Optional[PathLike] = None,
                 overrides: Optional[Mapping[str, Any]] = None) -> ModelT:
    """Validate defaults < config file < command-line overrides into `model`.

    Overrides use dotted keys like the file; None values are ignored so
    unset flags fall through to the file.
    """
    values: Dict[str, Any] = {}
    if path is not None:
        values = _nest(read_kv_file(path))
    if overrides:
        values = _merge(values, _nest({k: v for k, v in overrides.items() if v is not None}))
    try:
        return model.model_validate(values)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(p) for p in first["loc"] if not isinstance(p, int)) or None
        raise ConfigError(f"{key or model.__name__}: {first['msg']}", key=key) from None


def read_origin(path: PathLike) -> MapOrigin:
    flat = read_kv_file(path)
    allowed = {"easting_offset", "northing_offset", "zone_label"}
    for key in flat:
        if key not in allowed:
            raise ConfigError(f"unknown map origin key {key!r}", key=key)
    try:
        return MapOrigin(
            easting_offset=float(flat.get("easting_offset", 0.0)),
            northing_offset=float(flat.get("northing_offset", 0.0)),
            zone_label=str(flat.get("zone_label", "56S")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid map origin in {path}: {exc}") from None


def write_origin(path: PathLike, origin: MapOrigin) -> None:
    atomic_write_text(path, (
        f"easting_offset = {origin.easting_offset!r}\n"
        f"northing_offset = {origin.northing_offset!r}\n"
        f"zone_label = {origin.zone_label}\n"
    ))
