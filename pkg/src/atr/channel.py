"""Latent multipath channel of a metal enclosure.

The enclosure is represented as a tapped delay line (:class:`TapSet`) whose
expected tap power decays exponentially with delay. Tamper events and
legitimate environmental changes are applied as pure transformations that
return new tap sets.

Random draws are keyed by ``numpy.random.SeedSequence`` entropy tuples of the
form ``(seed, stream, ...)`` so every draw is reproducible and independent of
call order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .errors import ArgumentError, ConfigurationError, DegenerateInputError

# RNG stream identifiers (second SeedSequence entropy word).
_STREAM_TAPS = 1
_STREAM_NEEDLE = 2
_STREAM_LID = 3
_STREAM_PSU = 4
_STREAM_BOOT = 5
_STREAM_FAN = 6

# Needle imprint: |delta gain_n| = NEEDLE_COUPLING * diameter[mm] * (depth - dead_zone)[mm] * w_n.
# Chosen so a 0.3 mm needle at 45 mm in an empty box yields ~20x the short-term
# intra distance at the default VNA noise level (see scripts/calibrate.py).
NEEDLE_COUPLING = 0.0012
DEFAULT_DEAD_ZONE_MM = 8.0
# Late taps have bounced more often and couple more strongly to a scatterer:
# coupling power grows as (excess_delay / BOUNCE_DELAY) ** COUPLING_DELAY_EXPONENT.
BOUNCE_DELAY = 5e-9
COUPLING_DELAY_EXPONENT = 1.3

# Relative delay change per kelvin of enclosure temperature offset.
THERMAL_COEFFICIENT = 1.5e-5
# Fraction of taps touched by each server subsystem.
SUBSYSTEM_TAP_FRACTION = 0.08
PSU_STRENGTH = 0.5
BOOT_STRENGTH = 0.5
FAN_DEPTH = 0.025

# Lid removal: the remaining channel keeps this fraction of power and decays faster.
LID_POWER_RATIO = 0.25
LID_DECAY_RATIO = 1.0 / 3.0

MM = 1e-3


class Loading(str, Enum):
    EMPTY = "empty"
    MAINBOARD = "mainboard"
    ABSORBER = "absorber"
    SERVER = "server"


# Decay constant (= RMS delay spread of an untruncated exponential profile) per loading.
LOADING_DECAY = {
    Loading.EMPTY: 15e-9,
    Loading.MAINBOARD: 8e-9,
    Loading.ABSORBER: 4e-9,
    Loading.SERVER: 4.5e-9,
}


@dataclass(frozen=True)
class FrequencyGrid:
    """Equally spaced frequency points, endpoints included."""

    f_start: float = 2e9
    f_stop: float = 9e9
    n_points: int = 500

    def __post_init__(self):
        if not (self.f_stop > self.f_start > 0):
            raise ConfigurationError("need f_stop > f_start > 0")
        if self.n_points < 2:
            raise ConfigurationError("need at least 2 frequency points")

    @property
    def frequencies(self) -> np.ndarray:
        return np.linspace(self.f_start, self.f_stop, self.n_points)

    @property
    def spacing(self) -> float:
        return (self.f_stop - self.f_start) / (self.n_points - 1)

    def delay_grid(self) -> np.ndarray:
        """Delay axis implied by an inverse DFT over this grid."""
        return np.arange(self.n_points) / (self.n_points * self.spacing)


@dataclass(frozen=True)
class EnclosureProfile:
    """Configuration of a synthetic enclosure.

    ``loading`` fixes the nominal decay constant via :data:`LOADING_DECAY`;
    :meth:`for_loading` builds a profile whose ``target_rms_delay_spread`` and
    tap count follow from it. The spatial sensitivity fields shape the needle
    coupling: ``edge_floor`` is the relative sensitivity at the walls and
    ``insensitive_region`` (x0, y0, x1, y1) is a shadowed rectangle whose
    coupling is scaled by ``insensitive_scale``.
    """

    n_taps: int = 256
    tap_spacing: float = 0.5e-9
    target_rms_delay_spread: float = 15e-9
    loading: Loading = Loading.EMPTY
    seed: int = 0
    first_delay: float = 1e-9
    edge_floor: float = 0.8
    insensitive_region: tuple[float, float, float, float] | None = None
    insensitive_scale: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "loading", Loading(self.loading))
        if self.insensitive_region is not None:
            object.__setattr__(self, "insensitive_region", tuple(float(v) for v in self.insensitive_region))
        if int(self.n_taps) != self.n_taps or self.n_taps < 1:
            raise ConfigurationError(f"n_taps must be a positive integer, got {self.n_taps}")
        if not self.tap_spacing > 0:
            raise ConfigurationError("tap_spacing must be > 0")
        if not self.target_rms_delay_spread > 0:
            raise ConfigurationError("target_rms_delay_spread must be > 0")
        if not self.first_delay >= 0:
            raise ConfigurationError("first_delay must be >= 0")
        if not 0 <= self.edge_floor <= 1:
            raise ConfigurationError("edge_floor must lie in [0, 1]")
        if not 0 <= self.insensitive_scale <= 1:
            raise ConfigurationError("insensitive_scale must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    @property
    def decay_constant(self) -> float:
        return LOADING_DECAY[self.loading]

    @classmethod
    def for_loading(cls, loading: Loading | str, seed: int = 0, **overrides) -> EnclosureProfile:
        """Profile whose delay spread and tap span follow the loading's decay constant."""
        loading = Loading(loading)
        sigma = LOADING_DECAY[loading]
        spacing = overrides.pop("tap_spacing", 0.5e-9)
        kwargs = dict(
            n_taps=int(math.ceil(8 * sigma / spacing)),
            tap_spacing=spacing,
            target_rms_delay_spread=sigma,
            loading=loading,
            seed=seed,
        )
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class TapSet:
    """Delays [s] and complex gains of the multipath components.

    ``profile`` and ``decay_time`` record where the taps came from; they key the
    deterministic coupling draws of :func:`apply_perturbation` and
    :func:`apply_drift`.
    """

    delays: np.ndarray
    gains: np.ndarray
    profile: EnclosureProfile | None = None
    decay_time: float | None = None

    def __post_init__(self):
        delays = np.array(self.delays, dtype=float)
        gains = np.array(self.gains, dtype=complex)
        if delays.ndim != 1 or delays.shape != gains.shape or delays.size == 0:
            raise ArgumentError("delays and gains must be equal-length non-empty vectors")
        if delays[0] < 0 or np.any(np.diff(delays) <= 0) or not np.all(np.isfinite(delays)):
            raise ArgumentError("delays must be finite, non-negative and strictly increasing")
        power = float(np.sum(np.abs(gains) ** 2))
        if not (np.isfinite(power) and power > 0):
            raise ArgumentError("total tap power must be finite and > 0")
        delays.flags.writeable = False
        gains.flags.writeable = False
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "gains", gains)

    def __eq__(self, other):
        if not isinstance(other, TapSet):
            return NotImplemented
        return np.array_equal(self.delays, other.delays) and np.array_equal(self.gains, other.gains)

    __hash__ = None

    def __len__(self):
        return self.delays.size

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.gains) ** 2))

    def replace(self, *, delays=None, gains=None) -> TapSet:
        return TapSet(
            self.delays if delays is None else delays,
            self.gains if gains is None else gains,
            self.profile,
            self.decay_time,
        )

    def expected_power(self) -> np.ndarray:
        """Normalized expected power per tap under the synthesizing profile."""
        if self.decay_time is None:
            p = np.abs(self.gains) ** 2
        else:
            p = np.exp(-(self.delays - self.delays[0]) / self.decay_time)
        return p / p.sum()


def rms_delay_spread(pdp, delay_grid) -> float:
    """Power-weighted standard deviation of delay."""
    p = np.asarray(pdp, dtype=float)
    tau = np.asarray(delay_grid, dtype=float)
    if p.shape != tau.shape or p.ndim != 1:
        raise ArgumentError("pdp and delay grid must be equal-length vectors")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ArgumentError("pdp must be finite and non-negative")
    total = p.sum()
    if total <= 0:
        raise DegenerateInputError("pdp carries no power")
    mean = np.sum(p * tau) / total
    var = np.sum(p * (tau - mean) ** 2) / total
    return float(math.sqrt(max(var, 0.0)))


def _exponential_profile(delays: np.ndarray, decay: float) -> np.ndarray:
    return np.exp(-(delays - delays[0]) / decay)


def _solve_decay(delays: np.ndarray, target: float) -> float:
    """Decay constant whose exponential profile on ``delays`` has RMS spread ``target``."""
    span = delays[-1] - delays[0]
    ceiling = rms_delay_spread(np.ones_like(delays), delays)
    if target >= ceiling:
        raise ConfigurationError(
            f"target RMS delay spread {target:.3g} s unreachable with a {span:.3g} s tap span "
            f"(max {ceiling:.3g} s); increase n_taps or tap_spacing"
        )

    def f(log_decay):
        return rms_delay_spread(_exponential_profile(delays, math.exp(log_decay)), delays) - target

    lo = math.log(1e-3 * (span / max(delays.size - 1, 1)))
    hi = math.log(1e6 * span)
    return math.exp(brentq(f, lo, hi, xtol=1e-14, rtol=1e-12))


def _complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    z = rng.standard_normal((2,) + tuple(np.atleast_1d(size)))
    return (z[0] + 1j * z[1]) / math.sqrt(2)


def synth_enclosure(profile: EnclosureProfile) -> TapSet:
    """Draw the frozen multipath channel of an enclosure.

    Delays sit on a jittered grid (jitter < 0.9 spacing keeps them strictly
    increasing and breaks the spectral periodicity of a regular grid). Gains are
    circularly symmetric complex Gaussian with an exponential power profile
    whose decay is solved so the expected profile has the target RMS spread.
    """
    if not isinstance(profile, EnclosureProfile):
        raise ConfigurationError("profile must be an EnclosureProfile")
    rng = np.random.default_rng([profile.seed, _STREAM_TAPS])
    n = profile.n_taps
    jitter = rng.uniform(0.0, 0.9, n)
    delays = profile.first_delay + (np.arange(n) + jitter) * profile.tap_spacing
    if n == 1:
        gains = _complex_normal(rng, 1)
        return TapSet(delays, gains / abs(gains[0]), profile, None)
    decay = _solve_decay(delays, profile.target_rms_delay_spread)
    power = _exponential_profile(delays, decay)
    power /= power.sum()
    gains = np.sqrt(power) * _complex_normal(rng, n)
    return TapSet(delays, gains, profile, decay)


def taps_to_frequency_response(taps: TapSet, grid) -> np.ndarray:
    """H(f) = sum_n gain_n exp(-j 2 pi f delay_n), evaluated exactly."""
    f = grid.frequencies if isinstance(grid, FrequencyGrid) else np.asarray(grid, dtype=float)
    if f.ndim != 1 or f.size < 1:
        raise ArgumentError("frequency grid must be a non-empty vector")
    if np.any(f <= 0) or np.any(np.diff(f) <= 0):
        raise ArgumentError("frequencies must be positive and ascending")
    phase = np.exp(-2j * np.pi * np.outer(f, taps.delays))
    return phase @ taps.gains


def power_delay_profile(freq_response) -> np.ndarray:
    """Squared magnitude of the inverse DFT of a sampled frequency response.

    Normalization: ``numpy.fft.ifft`` (1/N), so ``pdp.sum()`` equals the mean of
    ``|H|**2`` and a unit single-path response has a unit peak. Bin ``k`` maps
    to delay ``k / (N * df)`` (see :meth:`FrequencyGrid.delay_grid`).
    """
    h = np.asarray(freq_response, dtype=complex)
    if h.ndim != 1 or h.size < 2:
        raise ArgumentError("frequency response must have at least 2 points")
    return np.abs(np.fft.ifft(h)) ** 2


class PerturbationKind(str, Enum):
    NEEDLE = "needle"
    LID_REMOVAL = "lid_removal"


@dataclass(frozen=True)
class PerturbationEvent:
    """A tamper event. Lengths in millimetres, position normalized to the lid."""

    kind: PerturbationKind = PerturbationKind.NEEDLE
    position: tuple[float, float] = (0.5, 0.5)
    diameter: float = 0.0
    depth: float = 0.0
    dead_zone: float = DEFAULT_DEAD_ZONE_MM

    def __post_init__(self):
        object.__setattr__(self, "kind", PerturbationKind(self.kind))
        x, y = (float(v) for v in self.position)
        object.__setattr__(self, "position", (x, y))
        if not (0 <= x <= 1 and 0 <= y <= 1):
            raise ArgumentError(f"position {self.position} outside [0, 1]^2")
        if not 0 <= self.diameter <= 2:
            raise ArgumentError(f"needle diameter {self.diameter} mm outside [0, 2]")
        if not self.depth >= 0 or not self.dead_zone >= 0:
            raise ArgumentError("depth and dead_zone must be >= 0")

    @property
    def effective_depth(self) -> float:
        return max(0.0, self.depth - self.dead_zone)

    @property
    def strength(self) -> float:
        """Scalar factor multiplying the coupling weights (zero inside the dead zone)."""
        if self.kind is not PerturbationKind.NEEDLE:
            return 0.0
        return NEEDLE_COUPLING * self.diameter * self.effective_depth


def _position_key(position) -> list[int]:
    return [int(round(float(v) * 1_000_000)) for v in position]


def spatial_sensitivity(profile: EnclosureProfile | None, position) -> float:
    """Relative field strength at a lid position: weak near walls and in shadowed regions."""
    if profile is None:
        profile = EnclosureProfile()
    x, y = position
    envelope = math.sqrt(max(math.sin(math.pi * x) * math.sin(math.pi * y), 0.0))
    s = profile.edge_floor + (1.0 - profile.edge_floor) * envelope
    region = profile.insensitive_region
    if region is not None:
        x0, y0, x1, y1 = region
        if x0 <= x <= x1 and y0 <= y <= y1:
            s *= profile.insensitive_scale
    return s


def coupling_weights(taps: TapSet, position) -> np.ndarray:
    """Complex per-tap coupling of a scatterer at ``position`` (deterministic in position and seed)."""
    profile = taps.profile
    seed = profile.seed if profile is not None else 0
    rng = np.random.default_rng([seed, _STREAM_NEEDLE, *_position_key(position)])
    xi = _complex_normal(rng, len(taps))
    excess = taps.delays - taps.delays[0]
    amplitude = np.sqrt(taps.expected_power() * (excess / BOUNCE_DELAY) ** COUPLING_DELAY_EXPONENT)
    return spatial_sensitivity(profile, position) * amplitude * xi


def apply_perturbation(taps: TapSet, event: PerturbationEvent) -> TapSet:
    """Return the tap set as seen with ``event`` applied; ``taps`` is left untouched."""
    if event.kind is PerturbationKind.LID_REMOVAL:
        return _remove_lid(taps)
    strength = event.strength
    if strength == 0.0:
        return taps
    return taps.replace(gains=taps.gains + strength * coupling_weights(taps, event.position))


def _remove_lid(taps: TapSet) -> TapSet:
    seed = taps.profile.seed if taps.profile is not None else 0
    rng = np.random.default_rng([seed, _STREAM_LID])
    decay = taps.decay_time if taps.decay_time is not None else float(taps.delays[-1] - taps.delays[0] + 1e-9)
    power = _exponential_profile(taps.delays, decay * LID_DECAY_RATIO)
    gains = np.sqrt(power) * _complex_normal(rng, len(taps))
    gains *= math.sqrt(LID_POWER_RATIO * taps.total_power / np.sum(np.abs(gains) ** 2))
    return taps.replace(gains=gains)


@dataclass(frozen=True)
class DriftState:
    """Legitimate environmental state of a running server."""

    temperature_offset: float = 0.0
    cpu_load: float = 0.0
    fan_phase: float = 0.0
    psu_on: bool = False
    booted: bool = False

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.temperature_offset, self.cpu_load, self.fan_phase)):
            raise ArgumentError("drift fields must be finite")
        if not 0 <= self.cpu_load <= 1:
            raise ArgumentError("cpu_load must lie in [0, 1]")


def _subsystem(taps: TapSet, stream: int, strength: float):
    """Tap indices and complex offsets owned by a server subsystem."""
    seed = taps.profile.seed if taps.profile is not None else 0
    rng = np.random.default_rng([seed, stream])
    n = len(taps)
    k = max(1, int(round(SUBSYSTEM_TAP_FRACTION * n)))
    idx = np.sort(rng.choice(n, size=k, replace=False))
    offsets = strength * np.sqrt(taps.expected_power()[idx]) * _complex_normal(rng, k)
    return idx, offsets


def fan_modulation_depth(drift: DriftState) -> float:
    depth = 0.0
    if drift.psu_on:
        depth += 0.5
    if drift.booted:
        depth += 0.5 + 0.5 * drift.cpu_load
    return FAN_DEPTH * depth


def apply_drift(taps: TapSet, drift: DriftState) -> TapSet:
    """Apply legitimate environmental changes.

    * thermal expansion: delays scale by ``1 + THERMAL_COEFFICIENT * temperature_offset``
    * PSU / boot: fixed complex offsets on each subsystem's tap subset
    * fans: periodic gain modulation of the fan taps, depth growing with CPU load

    ``cpu_load`` acts only through the fans here; its thermal effect is
    integrated over time by the caller (see :class:`atr.harness.ThermalModel`).
    """
    gains = np.array(taps.gains)
    if drift.psu_on:
        idx, off = _subsystem(taps, _STREAM_PSU, PSU_STRENGTH)
        gains[idx] += off
    if drift.booted:
        idx, off = _subsystem(taps, _STREAM_BOOT, BOOT_STRENGTH)
        gains[idx] += off
    depth = fan_modulation_depth(drift)
    if depth > 0:
        seed = taps.profile.seed if taps.profile is not None else 0
        rng = np.random.default_rng([seed, _STREAM_FAN])
        idx = np.sort(rng.choice(len(taps), size=max(1, int(round(SUBSYSTEM_TAP_FRACTION * len(taps)))), replace=False))
        offset = rng.uniform(0, 2 * np.pi, idx.size)
        gains[idx] *= 1.0 + depth * np.sin(drift.fan_phase + offset)
    delays = taps.delays
    if drift.temperature_offset != 0.0:
        delays = delays * (1.0 + THERMAL_COEFFICIENT * drift.temperature_offset)
    return taps.replace(delays=delays, gains=gains)


@dataclass(frozen=True)
class NoiseParams:
    measurement_noise_std: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.measurement_noise_std >= 0:
            raise ConfigurationError("measurement_noise_std must be >= 0")


def measurement_noise(shape, params: NoiseParams, draw_index: int) -> np.ndarray:
    """Complex zero-mean Gaussian noise, std per real/imaginary component."""
    if draw_index < 0:
        raise ArgumentError("draw_index must be >= 0")
    rng = np.random.default_rng([params.rng_seed, draw_index])
    z = rng.standard_normal((2,) + tuple(np.atleast_1d(shape)))
    return params.measurement_noise_std * (z[0] + 1j * z[1])


def apply_measurement_noise(response, params: NoiseParams, draw_index: int) -> np.ndarray:
    h = np.asarray(response, dtype=complex)
    if params.measurement_noise_std == 0:
        return h.copy()
    return h + measurement_noise(h.shape, params, draw_index)
