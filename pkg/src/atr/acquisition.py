"""Measurement frontends: swept-frequency (VNA-style) and impulse-response (UWB-style).

Both produce :class:`Response` objects holding non-negative magnitudes only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .channel import FrequencyGrid, NoiseParams, TapSet, measurement_noise, taps_to_frequency_response
from .errors import ArgumentError, ConfigurationError

__all__ = [
    "Frontend",
    "FrequencyGrid",
    "Response",
    "UwbConfig",
    "VnaConfig",
    "acquire_uwb",
    "acquire_uwb_block",
    "acquire_vna",
    "acquire_vna_block",
    "baseband_cir",
    "block_average",
    "smooth_frequency",
]


class Frontend(str, Enum):
    VNA = "vna"
    UWB = "uwb"


@dataclass(frozen=True)
class VnaConfig:
    grid: FrequencyGrid = field(default_factory=FrequencyGrid)
    smoothing_window: int = 5
    acquisition_time: float = 0.25

    def __post_init__(self):
        w = self.smoothing_window
        if int(w) != w or w < 1 or w % 2 == 0 or w > self.grid.n_points:
            raise ConfigurationError(f"smoothing_window must be odd and in [1, {self.grid.n_points}], got {w}")

    @property
    def length(self) -> int:
        return self.grid.n_points


def _default_centers() -> tuple[float, ...]:
    return tuple(np.linspace(2.496e9, 7.488e9, 11))


@dataclass(frozen=True)
class UwbConfig:
    n_channels: int = 11
    channel_centers: tuple[float, ...] = field(default_factory=_default_centers)
    taps_per_channel: int = 15
    tap_resolution: float = 1e-9
    bandwidth: float = 500e6
    acquisition_time: float = 0.7
    # First path: earliest CIR sample whose magnitude exceeds this fraction of the peak.
    first_path_fraction: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "channel_centers", tuple(float(c) for c in self.channel_centers))
        if self.n_channels < 1 or len(self.channel_centers) != self.n_channels:
            raise ConfigurationError("channel_centers must list exactly n_channels centers")
        if self.taps_per_channel < 1:
            raise ConfigurationError("taps_per_channel must be >= 1")
        if not (self.tap_resolution > 0 and self.bandwidth > 0):
            raise ConfigurationError("tap_resolution and bandwidth must be > 0")
        if any(c - self.bandwidth / 2 <= 0 for c in self.channel_centers):
            raise ConfigurationError("every channel band must lie at positive frequencies")
        if not 0 < self.first_path_fraction < 1:
            raise ConfigurationError("first_path_fraction must lie in (0, 1)")

    @property
    def length(self) -> int:
        return self.n_channels * self.taps_per_channel


@dataclass(frozen=True, eq=False)
class Response:
    """One real-valued measurement vector."""

    values: np.ndarray
    frontend: Frontend
    timestamp: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ArgumentError("response values must be a non-empty vector")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ArgumentError("response values must be finite and non-negative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "frontend", Frontend(self.frontend))

    @property
    def L(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, Response):
            return NotImplemented
        return (
            self.frontend == other.frontend
            and self.timestamp == other.timestamp
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def smooth_frequency(values, window: int) -> np.ndarray:
    """Centered moving average; the window shrinks symmetrically at the edges.

    Each output is computed as ``x[i] + mean(x[window] - x[i])`` so constant
    inputs come back bit-exact.
    """
    x = np.asarray(values, dtype=float)
    L = x.size
    if int(window) != window or window < 1 or window % 2 == 0:
        raise ArgumentError(f"window must be a positive odd integer, got {window}")
    if window > L:
        raise ArgumentError(f"window {window} exceeds length {L}")
    if window == 1:
        return x.copy()
    h = window // 2
    out = np.empty_like(x)
    interior = slice(h, L - h)
    out[interior] = x[interior] + (sliding_window_view(x, window) - x[interior, None]).mean(axis=1)
    for i in list(range(h)) + list(range(L - h, L)):
        k = min(i, L - 1 - i)
        out[i] = x[i] + (x[i - k : i + k + 1] - x[i]).mean()
    return out


def _vna_values(h: np.ndarray, config: VnaConfig, noise: NoiseParams, draw_index: int) -> np.ndarray:
    if noise.measurement_noise_std > 0:
        h = h + measurement_noise(h.shape, noise, draw_index)
    return smooth_frequency(np.abs(h), config.smoothing_window)


def acquire_vna(
    taps: TapSet, config: VnaConfig, noise: NoiseParams, draw_index: int, timestamp: float = 0.0
) -> Response:
    """Smoothed magnitude transfer function on the configured grid."""
    h = taps_to_frequency_response(taps, config.grid)
    return Response(_vna_values(h, config, noise, draw_index), Frontend.VNA, timestamp)


def acquire_vna_block(
    taps: TapSet, config: VnaConfig, noise: NoiseParams, first_draw: int, block_size: int, timestamp: float = 0.0
) -> Response:
    """Same result as block-averaging ``block_size`` consecutive :func:`acquire_vna` draws,
    but evaluates the noiseless response only once."""
    if block_size < 1:
        raise ArgumentError("block_size must be >= 1")
    h = taps_to_frequency_response(taps, config.grid)
    stack = np.stack([_vna_values(h, config, noise, first_draw + i) for i in range(block_size)])
    return Response(stack.mean(axis=0), Frontend.VNA, timestamp)


def baseband_cir(taps: TapSet, center: float, bandwidth: float, resolution: float, n_samples: int) -> np.ndarray:
    """Complex CIR of the taps seen through an ideal rectangular band.

    h[m] = sum_n g_n exp(-j 2 pi fc tau_n) sinc(B (m T - tau_n)); a unit tap at
    delay 0 gives h[0] = 1.
    """
    t = np.arange(n_samples) * resolution
    kernel = np.sinc(bandwidth * (t[:, None] - taps.delays[None, :]))
    return kernel @ (taps.gains * np.exp(-2j * np.pi * center * taps.delays))


def _cir_length(taps: TapSet, config: UwbConfig) -> int:
    return int(np.ceil(taps.delays[-1] / config.tap_resolution)) + config.taps_per_channel + 4


def _extract(cir: np.ndarray, config: UwbConfig) -> np.ndarray:
    """Magnitudes of ``taps_per_channel`` samples from the first path on, per row.

    Accepts one CIR or a (channels, samples) stack; short tails are zero-padded.
    """
    mag = np.abs(np.atleast_2d(cir))
    k = config.taps_per_channel
    first = np.argmax(mag >= config.first_path_fraction * mag.max(axis=1, keepdims=True), axis=1)
    padded = np.pad(mag, ((0, 0), (0, k)))
    out = np.take_along_axis(padded, first[:, None] + np.arange(k)[None, :], axis=1)
    return out[0] if np.ndim(cir) == 1 else out


def _uwb_cirs(taps: TapSet, config: UwbConfig) -> np.ndarray:
    # The sinc kernel does not depend on the channel center; only the carrier phase does.
    t = np.arange(_cir_length(taps, config)) * config.tap_resolution
    kernel = np.sinc(config.bandwidth * (t[:, None] - taps.delays[None, :]))
    carrier = np.exp(-2j * np.pi * np.outer(taps.delays, config.channel_centers))
    return (kernel @ (taps.gains[:, None] * carrier)).T


def _uwb_values(cirs: np.ndarray, config: UwbConfig, noise: NoiseParams, draw_index: int) -> np.ndarray:
    if noise.measurement_noise_std > 0:
        cirs = cirs + measurement_noise(cirs.shape, noise, draw_index)
    return _extract(cirs, config).ravel()


def acquire_uwb(
    taps: TapSet, config: UwbConfig, noise: NoiseParams, draw_index: int, timestamp: float = 0.0
) -> Response:
    """Concatenated CIR tap magnitudes after the first path, one segment per channel."""
    return Response(_uwb_values(_uwb_cirs(taps, config), config, noise, draw_index), Frontend.UWB, timestamp)


def acquire_uwb_block(
    taps: TapSet, config: UwbConfig, noise: NoiseParams, first_draw: int, block_size: int, timestamp: float = 0.0
) -> Response:
    if block_size < 1:
        raise ArgumentError("block_size must be >= 1")
    cirs = _uwb_cirs(taps, config)
    stack = np.stack([_uwb_values(cirs, config, noise, first_draw + i) for i in range(block_size)])
    return Response(stack.mean(axis=0), Frontend.UWB, timestamp)


def block_average(responses) -> Response:
    """Element-wise mean; the result carries the last member's timestamp."""
    responses = list(responses)
    if not responses:
        raise ArgumentError("block_average needs at least one response")
    frontend = responses[0].frontend
    L = responses[0].L
    for r in responses:
        if r.frontend != frontend or r.L != L:
            raise ArgumentError("block members must share frontend and length")
    stack = np.stack([r.values for r in responses])
    return Response(stack.mean(axis=0), frontend, responses[-1].timestamp)
