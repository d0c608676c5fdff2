"""Tamper monitor lifecycle: provisioning, threshold calibration, armed monitoring.

Transitions::

    Provisioning --finalize--> Armed --(MND > threshold)--> Alarm
         \\__________________ power_loss _____________________/
                                  |
                            IntegrityLost

Alarm and IntegrityLost are absorbing. The monitor consumes already
block-averaged responses; block formation is the acquisition side's job.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .detection import SelectionMask, alpha_profile, build_mask, mnd
from .errors import ArgumentError, ConfigurationError, StateError


class Phase(str, Enum):
    PROVISIONING = "provisioning"
    ARMED = "armed"
    ALARM = "alarm"
    INTEGRITY_LOST = "integrity_lost"


@dataclass(frozen=True)
class MonitorConfig:
    provisioning_count: int = 300
    drop_fraction: float = 0.3
    block_size: int = 10
    threshold_safety_factor: float = 1.0

    def __post_init__(self):
        if int(self.provisioning_count) != self.provisioning_count or self.provisioning_count < 1:
            raise ConfigurationError("provisioning_count must be an integer >= 1")
        if int(self.block_size) != self.block_size or self.block_size < 1:
            raise ConfigurationError("block_size must be an integer >= 1")
        if not 0 <= self.drop_fraction < 1:
            raise ConfigurationError("drop_fraction must lie in [0, 1)")
        if not self.threshold_safety_factor >= 1:
            raise ConfigurationError("threshold_safety_factor must be >= 1")


@dataclass(frozen=True, eq=False)
class ReferenceResponse:
    values: np.ndarray
    captured_at: float = 0.0


class Verdict(NamedTuple):
    mnd_value: float
    tampered: bool
    phase_after: Phase


class HistoryEntry(NamedTuple):
    timestamp: float
    mnd_value: float
    tampered: bool


def _unpack(response) -> tuple[np.ndarray, float]:
    values = getattr(response, "values", response)
    timestamp = float(getattr(response, "timestamp", 0.0))
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or not np.all(np.isfinite(v)) or np.any(v < 0):
        raise ArgumentError("response must be a finite non-negative vector")
    return v, timestamp


@dataclass
class Monitor:
    """Single-writer tamper monitor.

    Methods mutate the instance in place; ``ingest`` returns the verdict for the
    ingested response. ``history`` is append-only.
    """

    config: MonitorConfig = field(default_factory=MonitorConfig)
    phase: Phase = Phase.PROVISIONING
    reference: ReferenceResponse | None = None
    mask: SelectionMask | None = None
    threshold: float | None = None
    provisioning_buffer: list = field(default_factory=list)
    history: list = field(default_factory=list)
    _candidate: ReferenceResponse | None = field(default=None, repr=False)

    def ingest_provisioning(self, response) -> Monitor:
        """Collect a legitimate response; the first one becomes the reference."""
        if self.phase is not Phase.PROVISIONING:
            raise StateError(f"cannot ingest provisioning data in phase {self.phase.value}")
        values, timestamp = _unpack(response)
        if self.provisioning_buffer and values.size != self.provisioning_buffer[0].size:
            raise ArgumentError("provisioning responses must share one length")
        if self._candidate is None:
            self._candidate = ReferenceResponse(values, timestamp)
        self.provisioning_buffer.append(values)
        return self

    @property
    def reference_candidate(self) -> ReferenceResponse | None:
        return self.reference if self.reference is not None else self._candidate

    def finalize_provisioning(self) -> Monitor:
        """Fix reference, spectrum mask and the zero-false-positive threshold; arm."""
        if self.phase is not Phase.PROVISIONING:
            raise StateError(f"cannot finalize in phase {self.phase.value}")
        if len(self.provisioning_buffer) < self.config.provisioning_count:
            raise StateError(
                f"need {self.config.provisioning_count} provisioning responses, "
                f"have {len(self.provisioning_buffer)}"
            )
        ref = self._candidate
        alpha = alpha_profile(ref.values, self.provisioning_buffer)
        mask = build_mask(alpha, self.config.drop_fraction)
        worst = max(mnd(v, ref.values, mask) for v in self.provisioning_buffer)
        self.reference = ref
        self.mask = mask
        self.threshold = self.config.threshold_safety_factor * worst
        self.phase = Phase.ARMED
        return self

    def score(self, response) -> float:
        if self.reference is None:
            raise StateError("monitor has no reference yet")
        values, _ = _unpack(response)
        return mnd(values, self.reference.values, self.mask)

    def ingest(self, response) -> Verdict:
        """Compare against the reference; raise (and latch) the alarm above threshold."""
        if self.phase not in (Phase.ARMED, Phase.ALARM):
            raise StateError(f"cannot monitor in phase {self.phase.value}")
        values, timestamp = _unpack(response)
        value = mnd(values, self.reference.values, self.mask)
        tampered = value > self.threshold
        if tampered and self.phase is Phase.ARMED:
            self.phase = Phase.ALARM
        self.history.append(HistoryEntry(timestamp, value, tampered))
        return Verdict(value, tampered, self.phase)

    def power_loss(self) -> Monitor:
        """Any power interruption voids integrity for good."""
        self.phase = Phase.INTEGRITY_LOST
        return self

    def snapshot(self) -> dict:
        """JSON-serializable audit snapshot."""
        return {
            "schema_version": 1,
            "config": {
                "provisioning_count": self.config.provisioning_count,
                "drop_fraction": self.config.drop_fraction,
                "block_size": self.config.block_size,
                "threshold_safety_factor": self.config.threshold_safety_factor,
            },
            "phase": self.phase.value,
            "reference": None
            if self.reference is None
            else {"values": self.reference.values.tolist(), "captured_at": self.reference.captured_at},
            "mask": None
            if self.mask is None
            else {
                "keep": self.mask.keep.tolist(),
                "alpha": self.mask.alpha.tolist(),
                "drop_fraction": self.mask.drop_fraction,
            },
            "threshold": self.threshold,
            "history": [list(h) for h in self.history],
        }

    @classmethod
    def from_snapshot(cls, data: dict) -> Monitor:
        if data.get("schema_version") != 1:
            raise ConfigurationError(f"unsupported monitor snapshot version {data.get('schema_version')}")
        m = cls(MonitorConfig(**data["config"]))
        m.phase = Phase(data["phase"])
        if data["reference"] is not None:
            ref = data["reference"]
            m.reference = ReferenceResponse(np.asarray(ref["values"], dtype=float), float(ref["captured_at"]))
            m._candidate = m.reference
        if data["mask"] is not None:
            mk = data["mask"]
            m.mask = SelectionMask(
                np.asarray(mk["keep"], dtype=bool), np.asarray(mk["alpha"], dtype=float), float(mk["drop_fraction"])
            )
        m.threshold = data["threshold"]
        m.history = [HistoryEntry(float(t), float(v), bool(x)) for t, v, x in data["history"]]
        return m


def new_monitor(config: MonitorConfig | None = None) -> Monitor:
    return Monitor(config if config is not None else MonitorConfig())
