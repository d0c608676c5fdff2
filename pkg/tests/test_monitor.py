import itertools
import json

import numpy as np
import pytest

from atr.detection import mnd
from atr.errors import ArgumentError, ConfigurationError, StateError
from atr.monitor import Monitor, MonitorConfig, Phase, new_monitor


def provisioned(rng, M=20, L=40, jitter=0.01):
    base = rng.uniform(0.5, 1.5, L)
    m = new_monitor(MonitorConfig(provisioning_count=M))
    for _ in range(M):
        m.ingest_provisioning(base * (1 + jitter * rng.standard_normal(L)))
    return m, base


@pytest.mark.parametrize(
    "kw",
    [dict(provisioning_count=0), dict(block_size=0), dict(drop_fraction=1.0), dict(threshold_safety_factor=0.5)],
)
def test_config_rejects(kw):
    with pytest.raises(ConfigurationError):
        MonitorConfig(**kw)


def test_first_response_becomes_reference(rng):
    m, _ = provisioned(rng)
    first = m.provisioning_buffer[0]
    assert m.reference is None
    m.finalize_provisioning()
    assert np.array_equal(m.reference.values, first)
    assert m.phase is Phase.ARMED


def test_finalize_needs_enough_data(rng):
    m = new_monitor(MonitorConfig(provisioning_count=3))
    m.ingest_provisioning(np.ones(4))
    with pytest.raises(StateError):
        m.finalize_provisioning()


def test_zero_false_positives_on_provisioning_set(rng):
    m, _ = provisioned(rng)
    buffer = list(m.provisioning_buffer)
    m.finalize_provisioning()
    assert max(mnd(v, m.reference.values, m.mask) for v in buffer) <= m.threshold
    assert not any(m.ingest(v).tampered for v in buffer)


def test_safety_factor_scales_threshold(rng):
    a, _ = provisioned(np.random.default_rng(1))
    b = new_monitor(MonitorConfig(provisioning_count=20, threshold_safety_factor=2.0))
    for v in a.provisioning_buffer:
        b.ingest_provisioning(v)
    a.finalize_provisioning()
    b.finalize_provisioning()
    assert b.threshold == pytest.approx(2 * a.threshold)


def test_alarm_latches(rng):
    m, base = provisioned(rng)
    m.finalize_provisioning()
    v = m.ingest(base * 3)
    assert v.tampered and v.phase_after is Phase.ALARM
    after = m.ingest(m.reference.values)
    assert not after.tampered and after.phase_after is Phase.ALARM
    assert len(m.history) == 2


def test_mismatched_length_is_argument_error(rng):
    m, _ = provisioned(rng)
    with pytest.raises(ArgumentError):
        m.ingest_provisioning(np.ones(3))
    with pytest.raises(ArgumentError):
        m.ingest_provisioning(np.array([1.0, -1.0] * 20))


def _drive(m: Monitor, action: str, data):
    if action == "provision":
        m.ingest_provisioning(data)
    elif action == "finalize":
        m.finalize_provisioning()
    elif action == "ingest_ok":
        m.ingest(m.reference.values if m.reference is not None else data)
    elif action == "ingest_tamper":
        m.ingest(data * 5)
    elif action == "power_loss":
        m.power_loss()


ALLOWED = {
    Phase.PROVISIONING: {"provision": Phase.PROVISIONING, "finalize": Phase.ARMED, "power_loss": Phase.INTEGRITY_LOST},
    Phase.ARMED: {"ingest_ok": Phase.ARMED, "ingest_tamper": Phase.ALARM, "power_loss": Phase.INTEGRITY_LOST},
    Phase.ALARM: {"ingest_ok": Phase.ALARM, "ingest_tamper": Phase.ALARM, "power_loss": Phase.INTEGRITY_LOST},
    Phase.INTEGRITY_LOST: {"power_loss": Phase.INTEGRITY_LOST},
}
ACTIONS = ["provision", "finalize", "ingest_ok", "ingest_tamper", "power_loss"]


def _monitor_in(phase: Phase) -> tuple[Monitor, np.ndarray]:
    rng = np.random.default_rng(3)
    m, base = provisioned(rng, M=5, L=12)
    if phase is Phase.PROVISIONING:
        return m, base
    m.finalize_provisioning()
    if phase is Phase.ALARM:
        m.ingest(base * 5)
    elif phase is Phase.INTEGRITY_LOST:
        m.power_loss()
    assert m.phase is phase
    return m, base


@pytest.mark.parametrize("phase, action", list(itertools.product(Phase, ACTIONS)))
def test_transition_graph(phase, action):
    m, base = _monitor_in(phase)
    expected = ALLOWED[phase].get(action)
    if expected is None:
        with pytest.raises(StateError):
            _drive(m, action, base)
        assert m.phase is phase
    else:
        _drive(m, action, base)
        assert m.phase is expected


def test_integrity_lost_keeps_reference_but_refuses_use():
    m, base = _monitor_in(Phase.INTEGRITY_LOST)
    assert m.reference is not None
    with pytest.raises(StateError):
        m.ingest(base)


def test_score_without_reference():
    with pytest.raises(StateError):
        new_monitor().score(np.ones(3))


def test_snapshot_roundtrip(rng):
    m, base = provisioned(rng)
    m.finalize_provisioning()
    m.ingest(base)
    m.ingest(base * 2)
    snap = json.loads(json.dumps(m.snapshot()))
    back = Monitor.from_snapshot(snap)
    assert back.phase is m.phase and back.threshold == m.threshold
    assert np.array_equal(back.mask.keep, m.mask.keep)
    assert back.history == m.history
    assert back.ingest(base * 1.5) == m.ingest(base * 1.5)


def test_snapshot_version_checked():
    with pytest.raises(ConfigurationError):
        Monitor.from_snapshot({"schema_version": 99})
