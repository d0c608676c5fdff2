import csv
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from atr.errors import ArgumentError, TraceFormatError, TraceVersionError
from atr.traceio import (
    REPORT_CSV_COLUMNS,
    DetectionReport,
    HoleResult,
    TraceRecord,
    export_bands_csv,
    export_report_csv,
    quantile_bands,
    read_report_json,
    read_trace,
    report_to_json,
    write_report_json,
    write_trace,
)

finite = st.floats(min_value=0, max_value=1e300, allow_nan=False, allow_infinity=False)
records = st.builds(
    TraceRecord,
    frontend=st.sampled_from(["vna", "uwb"]),
    timestamp=st.floats(-1e9, 1e9, allow_nan=False),
    values=arrays(float, st.integers(1, 12), elements=finite),
    labels=st.dictionaries(st.sampled_from(["kind", "hole", "x"]), st.one_of(st.integers(-5, 500), st.text(max_size=5))),
)


@settings(max_examples=40, suppress_health_check=[HealthCheck.function_scoped_fixture, HealthCheck.too_slow])
@given(st.lists(records, max_size=4))
def test_trace_roundtrip_is_bit_exact(tmp_path, recs):
    path = tmp_path / "t.jsonl"
    write_trace(path, recs)
    assert read_trace(path) == recs


def test_blank_lines_are_skipped(tmp_path):
    path = tmp_path / "t.jsonl"
    rec = TraceRecord("vna", 1.0, [1.0, 2.0])
    path.write_text("\n" + rec.to_json() + "\n\n")
    assert read_trace(path) == [rec]


def test_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "t.jsonl"
    good = TraceRecord("vna", 1.0, [1.0]).to_json()
    path.write_text(good + "\n" + good + "\n{not json\n")
    with pytest.raises(TraceFormatError) as exc:
        read_trace(path)
    assert exc.value.lineno == 3 and "line 3" in str(exc.value)


@pytest.mark.parametrize(
    "line",
    [
        '{"schema_version": 1, "frontend": "vna", "timestamp": 0}',
        '{"schema_version": 1, "frontend": "vna", "timestamp": 0, "values": [-1.0]}',
        '{"schema_version": 1, "frontend": "vna", "timestamp": "x", "values": [1.0]}',
        "[1, 2]",
    ],
)
def test_bad_records(tmp_path, line):
    path = tmp_path / "t.jsonl"
    path.write_text(line + "\n")
    with pytest.raises(TraceFormatError):
        read_trace(path)


def test_version_mismatch(tmp_path):
    path = tmp_path / "t.jsonl"
    path.write_text('{"schema_version": 2, "frontend": "vna", "timestamp": 0, "values": [1.0]}\n')
    with pytest.raises(TraceVersionError):
        read_trace(path)
    with pytest.raises(TraceVersionError):
        TraceRecord("vna", 0.0, [1.0], schema_version=2)


def test_record_rejects_nan():
    with pytest.raises(ArgumentError):
        TraceRecord("vna", 0.0, [math.nan])


def _report():
    return DetectionReport(
        scenario="longterm",
        frontend="vna",
        holes=[HoleResult(0, 0.1, 0.2, True, 3, 2, 0.5, 0.75), HoleResult(1, 0.3, 0.4, False, 3, 0, math.nan, 0.1)],
        false_positive_count=1,
        threshold=0.25,
        metrics={"a": 1.5, "b": 2},
        curves={"x": np.arange(3.0)},
    )


def test_report_counts():
    r = _report()
    assert r.total == 2 and r.detected_count == 1


def test_report_json_roundtrip(tmp_path):
    r = _report()
    write_report_json(r, tmp_path / "r.json")
    back = read_report_json(tmp_path / "r.json")
    assert back.holes[0] == r.holes[0]
    assert math.isnan(back.holes[1].median_mnd)
    assert back.metrics == r.metrics and back.threshold == r.threshold
    assert report_to_json(back) == report_to_json(r)


def test_report_csv(tmp_path):
    path = tmp_path / "r.csv"
    export_report_csv(_report(), path)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == REPORT_CSV_COLUMNS
    assert rows[1] == ["0", "0.1", "0.2", "1", "3", "2", "0.5", "0.75"]
    assert rows[2][6] == ""


def test_csv_unwritable_path(tmp_path):
    with pytest.raises(OSError, match="cannot write report CSV"):
        export_report_csv(_report(), tmp_path / "missing" / "r.csv")


def test_quantile_bands_nest():
    rng = np.random.default_rng(0)
    t = np.arange(1000.0)
    v = rng.exponential(size=1000)
    bands = quantile_bands(t, v, "intra", 250.0)
    assert len(bands) == 4 * 4
    first = [b for b in bands if b.window_start == 0.0]
    widths = [b.upper - b.lower for b in first]
    assert widths == sorted(widths)
    assert quantile_bands([], [], "intra", 10.0) == []


def test_bands_csv(tmp_path):
    r = _report()
    r.bands = quantile_bands([0.0, 1.0], [1.0, 2.0], "intra", 10.0)
    export_bands_csv(r, tmp_path / "b.csv")
    rows = list(csv.reader((tmp_path / "b.csv").open()))
    assert rows[0] == ["window_start", "kind", "coverage", "lower", "upper"] and len(rows) == 5
