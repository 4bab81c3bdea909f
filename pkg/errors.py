"""
Error taxonomy for the georegistration toolkit.

Every error carries the process exit code the CLI should use and can render
itself as a flat record for the one-line machine-readable error report.
"""

from typing import Any, Dict, Optional


class GeoregError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1
    kind = "error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = {k: v for k, v in details.items() if v is not None}

    def to_record(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {"error": self.kind, "exit_code": self.exit_code}
        record.update(self.details)
        record["message"] = self.message
        return record


# -----------------------------
# Input / parse errors (exit 2)
# -----------------------------

class InputError(GeoregError):
    exit_code = 2
    kind = "input"


class ParseError(InputError):
    """A file could not be parsed; names file, line and column (1-based)."""

    kind = "parse"

    def __init__(self, message: str, file: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message, file=file, line=line, column=column)
        self.file = file
        self.line = line
        self.column = column

    def __str__(self) -> str:
        where = ":".join(str(p) for p in (self.file, self.line, self.column) if p is not None)
        return f"{where}: {self.message}" if where else self.message


class OrderingError(InputError):
    """A time series is not strictly increasing at the given record."""

    kind = "ordering"

    def __init__(self, message: str, stream: str, record: int):
        super().__init__(message, stream=stream, record=record)
        self.stream = stream
        self.record = record


class InvalidInformationError(InputError):
    kind = "information"


class GraphStructureError(InputError):
    """Missing vertex, wrong vertex type or duplicate id."""

    kind = "structure"

    def __init__(self, message: str, vertex_id: Optional[int] = None):
        super().__init__(message, vertex_id=vertex_id)
        self.vertex_id = vertex_id


# -----------------------------
# Numerical failures (exit 3)
# -----------------------------

class NumericalError(GeoregError):
    exit_code = 3
    kind = "numerical"


class GaugeError(NumericalError):
    """The graph has no fixed vertex or prior in some connected component."""

    kind = "gauge"


class SolverError(NumericalError):
    kind = "solver"


class CovarianceError(NumericalError):
    kind = "covariance"


class DegenerateAlignmentError(NumericalError):
    kind = "degenerate_alignment"

    def __init__(self, message: str, rank: int):
        super().__init__(message, rank=rank)
        self.rank = rank


class CorrespondenceError(NumericalError):
    kind = "correspondence"


# -----------------------------
# Configuration errors (exit 4)
# -----------------------------

class ConfigError(GeoregError):
    exit_code = 4
    kind = "config"

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message, key=key)
        self.key = key
