import json
from dataclasses import replace

import numpy as np
import pytest

from atr.acquisition import Frontend
from atr.channel import Loading
from atr.errors import ArgumentError, ConfigurationError
from atr.harness import (
    DepthSweepParams,
    ExperimentSpec,
    LongTermParams,
    Scenario,
    ThermalModel,
    evaluate_targets,
    hole_grid,
    longterm_records,
    provisioning_loads,
    replay,
    run,
    run_depth_sweep,
    run_longterm,
    score_records,
)
from atr.monitor import MonitorConfig
from atr.traceio import report_to_json, write_trace

SMALL_LONGTERM = {
    "scenario": "longterm",
    "seed": 4,
    "frontend": "both",
    "monitor": {"provisioning_count": 40},
    "params": {"duration": 6 * 3600, "hole_grid": [3, 3], "load_period": 7200, "band_window": 3600},
}


@pytest.fixture(scope="module")
def small_spec():
    return ExperimentSpec.from_dict(SMALL_LONGTERM)


@pytest.fixture(scope="module")
def small_records(small_spec):
    return longterm_records(small_spec)


def test_hole_grid_counts_and_bounds():
    holes = hole_grid(13, 9, (0.3, 0.15, 0.95, 0.85))
    assert len(holes) == 117
    xs, ys = zip(*holes)
    assert min(xs) > 0.3 and max(xs) < 0.95 and min(ys) > 0.15 and max(ys) < 0.85
    assert hole_grid(2, 1) == [(0.25, 0.5), (0.75, 0.5)]


def test_thermal_model_converges():
    th = ThermalModel(time_constant=60.0, load_rise=20.0)
    for _ in range(1000):
        th.step(1.0, 1.0)
    assert th.temperature == pytest.approx(20.0)
    th.step(0.0, 60.0)
    assert th.temperature == pytest.approx(20.0 / np.e)


def test_provisioning_loads_cover_both_levels():
    loads = provisioning_loads(1, 300, 60.0, (1800.0, 5400.0))
    assert loads.size == 300 and set(np.unique(loads)) == {0.0, 1.0}


def test_spec_requires_seed():
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"scenario": "lid_removal"})


def test_spec_rejects_unknown_params_and_versions():
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"scenario": "lid_removal", "seed": 1, "params": {"bogus": 1}})
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"scenario": "lid_removal", "seed": 1, "schema_version": 7})
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"scenario": "nope", "seed": 1})


def test_spec_roundtrip():
    spec = ExperimentSpec.from_dict(
        {"scenario": "depth_sweep", "seed": 3, "enclosure": {"loading": "absorber", "seed": 11},
         "params": {"hole_stride": 10}, "noise": {"vna": 0.02}}
    )
    assert spec.params == DepthSweepParams(hole_stride=10)
    assert spec.enclosure.loading is Loading.ABSORBER and spec.enclosure.seed == 11
    again = ExperimentSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again == spec


def test_scenario_mismatch_is_argument_error():
    with pytest.raises(ArgumentError):
        run_depth_sweep(ExperimentSpec(Scenario.LID_REMOVAL, seed=1))


def test_scenarios_are_deterministic():
    spec = ExperimentSpec.from_dict({"scenario": "depth_sweep", "seed": 2, "params": {"hole_stride": 60}})
    a = run(spec)["vna"]
    b = run(spec)["vna"]
    assert report_to_json(a) == report_to_json(b)
    c = run(spec.with_seed(3))["vna"]
    assert report_to_json(a) != report_to_json(c)


def test_depth_zero_is_intra_level():
    spec = ExperimentSpec.from_dict({"scenario": "depth_sweep", "seed": 2, "params": {"hole_stride": 40}})
    r = run_depth_sweep(spec)
    per_hole = np.asarray(r.curves["per_hole"])
    intra = np.asarray(r.curves["intra"])
    assert np.all(per_hole[:, 0] < 3 * intra.max())
    assert np.all(per_hole[:, -1] > per_hole[:, 4])


def test_server_states_off_is_zero():
    r = run(ExperimentSpec.from_dict({"scenario": "server_states", "seed": 1, "params": {"samples_per_state": 10}}))
    rep = r["vna"]
    assert rep.metrics["off_mean"] < 1e-4
    assert all(evaluate_targets("server_states", r).values())


def test_lid_removal_small_targets():
    r = run(ExperimentSpec.from_dict({"scenario": "lid_removal", "seed": 5, "params": {"samples": 10}}))
    assert all(evaluate_targets("lid_removal", r).values())


def test_longterm_labels_never_drive_provisioning(small_spec, small_records):
    recs = small_records[Frontend.VNA]
    m = small_spec.monitor.provisioning_count
    assert all(r.labels["kind"] == "provisioning" for r in recs[:m])
    assert all(r.labels["kind"] != "provisioning" for r in recs[m:])
    # Provisioning labels play no part in scoring.
    scrubbed = [replace(r, labels={}) if i < m else r for i, r in enumerate(recs)]
    assert report_to_json(score_records(scrubbed, small_spec.monitor)) == report_to_json(
        score_records(recs, small_spec.monitor)
    )


def test_longterm_report_structure(small_spec, small_records):
    reports = run_longterm(small_spec, small_records)
    assert set(reports) == {"vna", "vna_unmasked", "uwb", "uwb_unmasked"}
    r = reports["vna"]
    assert r.total == 9
    assert r.metrics["n_probes"] == sum(h.n_probes for h in r.holes)
    assert r.metrics["zero_fp_threshold"] >= r.threshold
    assert {b.kind for b in r.bands} == {"intra", "insertion"}
    assert r.metrics["kept_indices"] == 350
    assert reports["uwb"].metrics["kept_indices"] == 165 - 49


def test_replay_is_bit_identical(tmp_path, small_spec, small_records):
    live = run_longterm(small_spec, small_records)
    for fe, recs in small_records.items():
        path = tmp_path / f"{fe.value}.jsonl"
        write_trace(path, recs)
        replayed = replay(path, small_spec.monitor, band_window=small_spec.params.band_window)
        assert report_to_json(replayed) == report_to_json(live[fe.value])


def test_replay_wrong_length(tmp_path, small_spec, small_records):
    path = tmp_path / "vna.jsonl"
    write_trace(path, small_records[Frontend.VNA])
    with pytest.raises(ArgumentError):
        replay(path, small_spec.monitor, expected_length=165)


def test_replay_empty_trace(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    report = replay(path, MonitorConfig())
    assert report.metrics["n_ingested"] == 0 and report.total == 0


def test_evaluate_longterm_targets_shape(small_spec, small_records):
    targets = evaluate_targets(Scenario.LONG_TERM, run_longterm(small_spec, small_records))
    assert set(targets) == {
        "vna_detection_ge_95pct",
        "vna_masked_ge_unmasked",
        "uwb_detection_ge_75pct",
        "uwb_masked_ge_unmasked",
        "uwb_not_above_vna",
    }


def test_longterm_params_defaults_match_experiment():
    p = LongTermParams()
    assert p.hole_grid[0] * p.hole_grid[1] == 117
    assert p.duration == 10 * 86400 and p.load_period == 3 * 3600
