"""Line-delimited trace files and detection reports.

Trace format (one JSON object per line, UTF-8)::

    {"schema_version": 1, "frontend": "vna", "timestamp": 60.0,
     "values": [0.81, ...], "labels": {"kind": "intra"}}

Floats are written with Python's shortest round-trip ``repr`` so reading a
trace back reproduces every value bit-for-bit.

Report CSV columns, in order::

    hole_id,x,y,detected,n_probes,n_detected,median_mnd,max_mnd
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, TraceFormatError, TraceVersionError

SCHEMA_VERSION = 1
REPORT_CSV_COLUMNS = ("hole_id", "x", "y", "detected", "n_probes", "n_detected", "median_mnd", "max_mnd")
COVERAGES = (25, 50, 75, 99)


@dataclass(eq=False)
class TraceRecord:
    frontend: str
    timestamp: float
    values: np.ndarray
    labels: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.schema_version != SCHEMA_VERSION:
            raise TraceVersionError(f"unsupported schema_version {self.schema_version}")
        if self.values.ndim != 1 or not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ArgumentError("trace values must be a finite non-negative vector")

    def __eq__(self, other):
        if not isinstance(other, TraceRecord):
            return NotImplemented
        return (
            self.frontend == other.frontend
            and self.timestamp == other.timestamp
            and self.labels == other.labels
            and self.schema_version == other.schema_version
            and np.array_equal(self.values, other.values)
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": self.schema_version,
                "frontend": self.frontend,
                "timestamp": float(self.timestamp),
                "values": self.values.tolist(),
                "labels": self.labels,
            },
            allow_nan=False,
            separators=(",", ":"),
        )


def write_trace(path, records) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json())
            fh.write("\n")


def _parse_line(line: str, lineno: int) -> TraceRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"malformed record ({exc.msg})", lineno) from None
    if not isinstance(obj, dict):
        raise TraceFormatError("record is not an object", lineno)
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise TraceVersionError(f"unsupported schema_version {version!r}", lineno)
    missing = {"frontend", "timestamp", "values"} - obj.keys()
    if missing:
        raise TraceFormatError(f"missing fields {sorted(missing)}", lineno)
    try:
        return TraceRecord(
            frontend=str(obj["frontend"]),
            timestamp=float(obj["timestamp"]),
            values=np.asarray(obj["values"], dtype=float),
            labels=dict(obj.get("labels") or {}),
        )
    except (TypeError, ValueError) as exc:
        raise TraceFormatError(str(exc), lineno) from None


def iter_trace(path):
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                yield _parse_line(line, lineno)


def read_trace(path) -> list[TraceRecord]:
    return list(iter_trace(path))


@dataclass
class HoleResult:
    hole_id: int
    x: float
    y: float
    detected: bool
    n_probes: int = 0
    n_detected: int = 0
    median_mnd: float = float("nan")
    max_mnd: float = float("nan")


@dataclass
class QuantileBand:
    """Central band covering ``coverage`` percent of one distance population in a time window."""

    window_start: float
    kind: str
    coverage: int
    lower: float
    upper: float


@dataclass
class DetectionReport:
    scenario: str
    frontend: str = ""
    holes: list[HoleResult] = field(default_factory=list)
    false_positive_count: int = 0
    threshold: float = float("nan")
    bands: list[QuantileBand] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return len(self.holes)

    @property
    def detected_count(self) -> int:
        return sum(1 for h in self.holes if h.detected)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["detected_count"] = self.detected_count
        d["total"] = self.total
        return _jsonable(d)

    @classmethod
    def from_dict(cls, d: dict) -> DetectionReport:
        return cls(
            scenario=d["scenario"],
            frontend=d.get("frontend", ""),
            holes=[HoleResult(**_floats_back(h)) for h in d.get("holes", [])],
            false_positive_count=int(d.get("false_positive_count", 0)),
            threshold=_float_back(d.get("threshold")),
            bands=[QuantileBand(**b) for b in d.get("bands", [])],
            metrics={k: _float_back(v) if v is None or isinstance(v, float) else v for k, v in d.get("metrics", {}).items()},
            curves=d.get("curves", {}),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _float_back(v):
    return float("nan") if v is None else v


def _floats_back(h: dict) -> dict:
    return {k: (_float_back(v) if k in ("median_mnd", "max_mnd") else v) for k, v in h.items()}


def report_to_json(report: DetectionReport) -> str:
    return json.dumps(report.to_dict(), indent=1, sort_keys=True, allow_nan=False)


def write_report_json(report: DetectionReport, path) -> None:
    Path(path).write_text(report_to_json(report) + "\n", encoding="utf-8")


def read_report_json(path) -> DetectionReport:
    return DetectionReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def export_report_csv(report: DetectionReport, path) -> None:
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_CSV_COLUMNS)
            for h in report.holes:
                w.writerow([_fmt(getattr(h, c)) for c in REPORT_CSV_COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write report CSV to {path}: {exc.strerror or exc}") from exc


def export_bands_csv(report: DetectionReport, path) -> None:
    """Quantile bands over time: window_start,kind,coverage,lower,upper."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("window_start", "kind", "coverage", "lower", "upper"))
            for b in report.bands:
                w.writerow([_fmt(float(b.window_start)), b.kind, b.coverage, _fmt(float(b.lower)), _fmt(float(b.upper))])
    except OSError as exc:
        raise OSError(f"cannot write bands CSV to {path}: {exc.strerror or exc}") from exc


def quantile_bands(times, values, kind: str, window: float) -> list[QuantileBand]:
    """Central coverage bands (25/50/75/99 %) of ``values`` per time window."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size == 0:
        return []
    bins = np.floor(times / window).astype(np.int64)
    out = []
    for b in np.unique(bins):
        v = values[bins == b]
        for c in COVERAGES:
            lo, hi = np.percentile(v, [50 - c / 2, 50 + c / 2])
            out.append(QuantileBand(float(b * window), kind, c, float(lo), float(hi)))
    return out
