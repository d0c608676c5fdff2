import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from atr.acquisition import (
    Frontend,
    Response,
    UwbConfig,
    VnaConfig,
    acquire_uwb,
    acquire_uwb_block,
    acquire_vna,
    acquire_vna_block,
    baseband_cir,
    block_average,
    smooth_frequency,
)
from atr.channel import EnclosureProfile, FrequencyGrid, NoiseParams, TapSet, synth_enclosure
from atr.errors import ArgumentError, ConfigurationError


@pytest.fixture(scope="module")
def server():
    return synth_enclosure(EnclosureProfile.for_loading("server", seed=2))


def naive_smooth(x, window):
    h = window // 2
    out = []
    for i in range(len(x)):
        k = min(h, i, len(x) - 1 - i)
        out.append(np.mean(x[i - k : i + k + 1]))
    return np.array(out)


@given(arrays(float, st.integers(5, 60), elements=st.floats(0, 10)), st.sampled_from([1, 3, 5]))
def test_smoothing_matches_naive(x, window):
    np.testing.assert_allclose(smooth_frequency(x, window), naive_smooth(x, window), rtol=1e-12, atol=1e-12)


@given(st.floats(0, 1e3), st.integers(5, 50))
def test_smoothing_keeps_constants_exact(c, n):
    x = np.full(n, c)
    assert np.array_equal(smooth_frequency(x, 5), x)


@pytest.mark.parametrize("window", [0, 2, 7])
def test_smoothing_rejects_window(window):
    with pytest.raises(ArgumentError):
        smooth_frequency(np.ones(5), window)


def test_vna_config_validation():
    with pytest.raises(ConfigurationError):
        VnaConfig(smoothing_window=4)
    with pytest.raises(ConfigurationError):
        VnaConfig(grid=FrequencyGrid(n_points=3), smoothing_window=5)


def test_vna_response(server):
    r = acquire_vna(server, VnaConfig(), NoiseParams(0.01, 1), 0, timestamp=5.0)
    assert r.frontend is Frontend.VNA and r.L == 500 and r.timestamp == 5.0
    assert np.all(r.values >= 0)


def test_vna_single_tap_is_flat():
    taps = TapSet(np.array([3e-9]), np.array([0.5 + 0j]))
    r = acquire_vna(taps, VnaConfig(), NoiseParams(0.0, 0), 0)
    np.testing.assert_allclose(r.values, 0.5, rtol=1e-12)


def test_vna_block_equals_average_of_singles(server):
    cfg, noise = VnaConfig(), NoiseParams(0.02, 5)
    singles = [acquire_vna(server, cfg, noise, 10 + i) for i in range(4)]
    block = acquire_vna_block(server, cfg, noise, 10, 4)
    np.testing.assert_allclose(block.values, block_average(singles).values, rtol=1e-14)


def test_uwb_config_defaults():
    cfg = UwbConfig()
    assert cfg.length == 165
    assert cfg.channel_centers[0] == pytest.approx(2.496e9)
    assert cfg.channel_centers[-1] == pytest.approx(7.488e9)


@pytest.mark.parametrize(
    "kw", [dict(n_channels=2), dict(taps_per_channel=0), dict(first_path_fraction=1.0), dict(bandwidth=0.0)]
)
def test_uwb_config_rejects(kw):
    with pytest.raises(ConfigurationError):
        UwbConfig(**kw)


def test_baseband_unit_tap():
    taps = TapSet(np.array([0.0]), np.array([1.0 + 0j]))
    h = baseband_cir(taps, 4e9, 500e6, 1e-9, 8)
    assert h[0] == pytest.approx(1.0)
    # sinc zero-crossings every 2 ns at 500 MHz
    assert abs(h[2]) < 1e-12 and abs(h[4]) < 1e-12


def test_uwb_starts_at_first_path():
    taps = TapSet(np.array([10e-9]), np.array([1.0 + 0j]))
    r = acquire_uwb(taps, UwbConfig(n_channels=1, channel_centers=(4e9,)), NoiseParams(0.0, 0), 0)
    assert r.L == 15
    # The sinc sidelobe 2.5 periods ahead of the peak (1 / 2.5 pi) already crosses 10 %.
    assert r.values[0] == pytest.approx(1 / (2.5 * np.pi), rel=1e-9)
    assert np.argmax(r.values) == 5


def test_uwb_late_path_needs_long_window():
    # Second path 50 ns after the first: outside the default 15-sample window.
    taps = TapSet(np.array([5e-9, 55e-9]), np.array([1.0 + 0j, 0.5 + 0j]))
    cfg = UwbConfig(n_channels=1, channel_centers=(4e9,), taps_per_channel=64)
    v = acquire_uwb(taps, cfg, NoiseParams(0.0, 0), 0).values
    assert v[55] == pytest.approx(0.5, rel=1e-2)
    short = acquire_uwb(taps, UwbConfig(n_channels=1, channel_centers=(4e9,)), NoiseParams(0.0, 0), 0).values
    assert short.size == 15 and short.max() == pytest.approx(1.0, rel=1e-2)


def test_uwb_block_equals_average_of_singles(server):
    cfg, noise = UwbConfig(), NoiseParams(0.02, 3)
    singles = [acquire_uwb(server, cfg, noise, i) for i in range(3)]
    np.testing.assert_allclose(
        acquire_uwb_block(server, cfg, noise, 0, 3).values, block_average(singles).values, rtol=1e-14
    )


def test_response_validation():
    with pytest.raises(ArgumentError):
        Response(np.array([1.0, -1.0]), Frontend.VNA)
    with pytest.raises(ArgumentError):
        Response(np.array([]), Frontend.VNA)
    r = Response(np.array([1.0]), "uwb")
    assert r.frontend is Frontend.UWB
    with pytest.raises(ValueError):
        r.values[0] = 2.0


def test_block_average_rules():
    a = Response(np.array([1.0, 3.0]), Frontend.VNA, 1.0)
    b = Response(np.array([3.0, 5.0]), Frontend.VNA, 2.0)
    avg = block_average([a, b])
    assert avg == Response(np.array([2.0, 4.0]), Frontend.VNA, 2.0)
    with pytest.raises(ArgumentError):
        block_average([])
    with pytest.raises(ArgumentError):
        block_average([a, Response(np.array([1.0, 1.0]), Frontend.UWB)])
    with pytest.raises(ArgumentError):
        acquire_vna_block(TapSet(np.array([0.0]), np.array([1 + 0j])), VnaConfig(), NoiseParams(), 0, 0)
