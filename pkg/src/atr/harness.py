"""Experiment scenarios composing simulator, frontends, detection and monitor.

Every scenario is a pure function of its :class:`ExperimentSpec`, whose
seed keys the enclosure (unless one is given explicitly) and all measurement
noise, so two runs of the same ExperimentSpec produce identical reports.

Simulated time advances in seconds. Environmental drift is sampled once per
block-averaged response (a block spans a few seconds, far below the thermal
time constant).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import stats

from .acquisition import (
    Frontend,
    Response,
    UwbConfig,
    VnaConfig,
    _uwb_cirs,
    _uwb_values,
    _vna_values,
)
from .channel import (
    DEFAULT_DEAD_ZONE_MM,
    DriftState,
    EnclosureProfile,
    FrequencyGrid,
    Loading,
    NoiseParams,
    PerturbationEvent,
    PerturbationKind,
    TapSet,
    apply_drift,
    apply_perturbation,
    power_delay_profile,
    rms_delay_spread,
    synth_enclosure,
    taps_to_frequency_response,
)
from .detection import mnd
from .errors import ArgumentError, ConfigurationError
from .monitor import MonitorConfig, new_monitor
from .traceio import DetectionReport, HoleResult, TraceRecord, quantile_bands, read_trace

log = logging.getLogger(__name__)

SPEC_SCHEMA_VERSION = 1

# Default per-component measurement noise std (|H| is ~1 RMS for a unit-power channel).
VNA_NOISE_STD = 0.01
UWB_NOISE_STD = 0.012


class Scenario(str, Enum):
    DEPTH_SWEEP = "depth_sweep"
    DIAMETER_SWEEP = "diameter_sweep"
    LOADING_COMPARISON = "loading_comparison"
    HEATMAP = "heatmap"
    SERVER_STATES = "server_states"
    LONG_TERM = "longterm"
    LID_REMOVAL = "lid_removal"


class FrontendChoice(str, Enum):
    VNA = "vna"
    UWB = "uwb"
    BOTH = "both"

    def frontends(self) -> list[Frontend]:
        if self is FrontendChoice.BOTH:
            return [Frontend.VNA, Frontend.UWB]
        return [Frontend(self.value)]


# ---------------------------------------------------------------------------
# scenario parameters


@dataclass(frozen=True)
class DepthSweepParams:
    lid_grid: tuple[int, int] = (26, 16)
    hole_stride: int = 5
    diameter: float = 0.3
    depth_step: float = 4.0
    max_depth: float = 56.0


@dataclass(frozen=True)
class DiameterSweepParams:
    n_holes: int = 21
    diameters: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(21))
    depths: tuple[float, ...] = (16.0, 36.0, 56.0)


@dataclass(frozen=True)
class LoadingComparisonParams:
    lid_grid: tuple[int, int] = (26, 16)
    loadings: tuple[str, ...] = ("empty", "mainboard", "absorber")
    diameter: float = 0.3
    depth: float = 45.0
    sigma_seeds: int = 20


@dataclass(frozen=True)
class HeatmapParams:
    lid_grid: tuple[int, int] = (26, 18)
    insensitive_region: tuple[float, float, float, float] = (0.0, 0.0, 0.3, 1.0)
    diameter: float = 1.0
    depth: float = 40.0


@dataclass(frozen=True)
class ServerStatesParams:
    samples_per_state: int = 60
    cadence: float = 60.0
    thermal_time_constant: float = 1200.0
    load_temperature_rise: float = 20.0


@dataclass(frozen=True)
class LongTermParams:
    duration: float = 10 * 86400.0
    cadence: float = 60.0
    load_period: float = 3 * 3600.0
    probe_interval: float = 300.0
    hole_grid: tuple[int, int] = (13, 9)
    sensitive_region: tuple[float, float, float, float] = (0.3, 0.15, 0.95, 0.85)
    diameter: float = 1.0
    depth: float = 40.0
    thermal_time_constant: float = 1200.0
    load_temperature_rise: float = 20.0
    provisioning_hold: tuple[float, float] = (1800.0, 5400.0)
    band_window: float = 6 * 3600.0


@dataclass(frozen=True)
class LidRemovalParams:
    samples: int = 100
    position: tuple[float, float] = (0.5, 0.5)
    diameter: float = 1.0
    depth: float = 40.0


PARAMS_TYPES = {
    Scenario.DEPTH_SWEEP: DepthSweepParams,
    Scenario.DIAMETER_SWEEP: DiameterSweepParams,
    Scenario.LOADING_COMPARISON: LoadingComparisonParams,
    Scenario.HEATMAP: HeatmapParams,
    Scenario.SERVER_STATES: ServerStatesParams,
    Scenario.LONG_TERM: LongTermParams,
    Scenario.LID_REMOVAL: LidRemovalParams,
}

DEFAULT_LOADING = {
    Scenario.DEPTH_SWEEP: Loading.EMPTY,
    Scenario.DIAMETER_SWEEP: Loading.EMPTY,
    Scenario.LOADING_COMPARISON: Loading.EMPTY,
    Scenario.HEATMAP: Loading.SERVER,
    Scenario.SERVER_STATES: Loading.SERVER,
    Scenario.LONG_TERM: Loading.SERVER,
    Scenario.LID_REMOVAL: Loading.EMPTY,
}


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: Scenario
    seed: int
    enclosure: EnclosureProfile | None = None
    frontend: FrontendChoice = FrontendChoice.VNA
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    params: object = None
    vna: VnaConfig = field(default_factory=VnaConfig)
    uwb: UwbConfig = field(default_factory=UwbConfig)
    vna_noise_std: float = VNA_NOISE_STD
    uwb_noise_std: float = UWB_NOISE_STD

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        object.__setattr__(self, "frontend", FrontendChoice(self.frontend))
        if self.seed is None or int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError("seed is mandatory and must be a non-negative integer")
        ptype = PARAMS_TYPES[self.scenario]
        if self.params is None:
            object.__setattr__(self, "params", ptype())
        elif isinstance(self.params, dict):
            object.__setattr__(self, "params", _build(ptype, self.params))
        elif not isinstance(self.params, ptype):
            raise ConfigurationError(f"params for {self.scenario.value} must be {ptype.__name__}")
        if self.vna_noise_std < 0 or self.uwb_noise_std < 0:
            raise ConfigurationError("noise std must be >= 0")

    def resolved_enclosure(self, loading: Loading | None = None) -> EnclosureProfile:
        """The explicit enclosure, or the scenario default keyed by the experiment seed."""
        if self.enclosure is not None and loading is None:
            return self.enclosure
        if self.enclosure is not None:
            return EnclosureProfile.for_loading(
                loading,
                seed=self.enclosure.seed,
                edge_floor=self.enclosure.edge_floor,
                insensitive_scale=self.enclosure.insensitive_scale,
            )
        return EnclosureProfile.for_loading(loading or DEFAULT_LOADING[self.scenario], seed=self.seed)

    def with_seed(self, seed: int) -> ExperimentSpec:
        return replace(self, seed=seed)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentSpec:
        version = d.get("schema_version", SPEC_SCHEMA_VERSION)
        if version != SPEC_SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported spec schema_version {version}")
        noise = d.get("noise", {})
        kwargs = dict(
            scenario=Scenario(d["scenario"]),
            seed=d.get("seed"),
            frontend=d.get("frontend", "vna"),
            params=d.get("params"),
            vna_noise_std=noise.get("vna", VNA_NOISE_STD),
            uwb_noise_std=noise.get("uwb", UWB_NOISE_STD),
        )
        if d.get("enclosure") is not None:
            enc = dict(d["enclosure"])
            if "loading" in enc and set(enc) <= {"loading", "seed", "edge_floor", "insensitive_region", "insensitive_scale"}:
                loading = enc.pop("loading")
                kwargs["enclosure"] = EnclosureProfile.for_loading(loading, **enc)
            else:
                kwargs["enclosure"] = _build(EnclosureProfile, enc)
        if d.get("monitor") is not None:
            kwargs["monitor"] = _build(MonitorConfig, d["monitor"])
        if d.get("vna") is not None:
            v = dict(d["vna"])
            if "grid" in v:
                v["grid"] = _build(FrequencyGrid, v["grid"])
            kwargs["vna"] = _build(VnaConfig, v)
        if d.get("uwb") is not None:
            kwargs["uwb"] = _build(UwbConfig, d["uwb"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> ExperimentSpec:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        d = {
            "schema_version": SPEC_SCHEMA_VERSION,
            "scenario": self.scenario.value,
            "seed": self.seed,
            "frontend": self.frontend.value,
            "monitor": asdict(self.monitor),
            "params": asdict(self.params),
            "noise": {"vna": self.vna_noise_std, "uwb": self.uwb_noise_std},
        }
        if self.enclosure is not None:
            enc = asdict(self.enclosure)
            enc["loading"] = self.enclosure.loading.value
            d["enclosure"] = enc
        return d


def _build(cls, d: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return cls(**kw)


# ---------------------------------------------------------------------------
# measurement plumbing


def hole_grid(nx: int, ny: int, region=(0.0, 0.0, 1.0, 1.0)) -> list[tuple[float, float]]:
    """Cell-centre positions of an nx-by-ny hole grid inside ``region``, row-major."""
    x0, y0, x1, y1 = region
    xs = x0 + (np.arange(nx) + 0.5) / nx * (x1 - x0)
    ys = y0 + (np.arange(ny) + 0.5) / ny * (y1 - y0)
    return [(float(x), float(y)) for y in ys for x in xs]


def _is_border(pos, nx, ny, grid_positions_x, grid_positions_y) -> bool:
    x, y = pos
    return x in (grid_positions_x[0], grid_positions_x[-1]) or y in (grid_positions_y[0], grid_positions_y[-1])


class Rig:
    """Measurement frontends with their own draw counters.

    Each call to :meth:`measure` returns one block-averaged response and
    advances the frontend's draw index by the block size. The noiseless
    response of the most recent tap set is cached, so repeated measurements of
    an unchanged channel only pay for the noise.
    """

    def __init__(self, spec: ExperimentSpec, seed_offset: int = 0):
        self.vna = spec.vna
        self.uwb = spec.uwb
        self.block = spec.monitor.block_size
        base = (int(spec.seed) + seed_offset) * 16
        self.noise = {
            Frontend.VNA: NoiseParams(spec.vna_noise_std, base + 1),
            Frontend.UWB: NoiseParams(spec.uwb_noise_std, base + 2),
        }
        self.draw = {Frontend.VNA: 0, Frontend.UWB: 0}
        self._cache: dict = {}

    def length(self, frontend: Frontend) -> int:
        return self.vna.length if frontend is Frontend.VNA else self.uwb.length

    def _noiseless(self, taps: TapSet, frontend: Frontend):
        hit = self._cache.get(frontend)
        if hit is not None and hit[0] is taps:
            return hit[1]
        if frontend is Frontend.VNA:
            h = taps_to_frequency_response(taps, self.vna.grid)
        else:
            h = _uwb_cirs(taps, self.uwb)
        self._cache[frontend] = (taps, h)
        return h

    def measure(self, taps: TapSet, frontend: Frontend, timestamp: float = 0.0) -> Response:
        h = self._noiseless(taps, frontend)
        noise = self.noise[frontend]
        first = self.draw[frontend]
        self.draw[frontend] += self.block
        if frontend is Frontend.VNA:
            stack = [_vna_values(h, self.vna, noise, first + i) for i in range(self.block)]
        else:
            stack = [_uwb_values(h, self.uwb, noise, first + i) for i in range(self.block)]
        return Response(np.mean(np.stack(stack), axis=0), frontend, timestamp)


@dataclass
class ThermalModel:
    """First-order lag from CPU load to enclosure temperature offset [K]."""

    time_constant: float = 1200.0
    load_rise: float = 20.0
    temperature: float = 0.0

    def step(self, load: float, dt: float) -> float:
        target = self.load_rise * load
        self.temperature = target + (self.temperature - target) * math.exp(-dt / self.time_constant)
        return self.temperature


def _needle(pos, diameter, depth) -> PerturbationEvent:
    return PerturbationEvent(PerturbationKind.NEEDLE, pos, diameter, depth, DEFAULT_DEAD_ZONE_MM)


def _spearman(x, y) -> float:
    return float(stats.spearmanr(x, y).statistic)


def _r_squared(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return float(1.0 - np.sum(resid**2) / ss_tot) if ss_tot > 0 else 1.0


def _frontend(spec: ExperimentSpec) -> Frontend:
    return spec.frontend.frontends()[0]


# ---------------------------------------------------------------------------
# scenarios


def run_depth_sweep(spec: ExperimentSpec) -> DetectionReport:
    """Needle lowered step by step into equidistantly sampled holes."""
    _expect(spec, Scenario.DEPTH_SWEEP)
    p: DepthSweepParams = spec.params
    fe = _frontend(spec)
    enclosure = spec.resolved_enclosure()
    clean = synth_enclosure(enclosure)
    rig = Rig(spec)
    holes = hole_grid(*p.lid_grid)[:: p.hole_stride]
    depths = np.arange(0.0, p.max_depth + 1e-9, p.depth_step)
    intra = np.empty(len(holes))
    curves = np.empty((len(holes), depths.size))
    for i, pos in enumerate(holes):
        ref = rig.measure(clean, fe)
        intra[i] = mnd(rig.measure(clean, fe), ref)
        for j, depth in enumerate(depths):
            taps = apply_perturbation(clean, _needle(pos, p.diameter, depth))
            curves[i, j] = mnd(rig.measure(taps, fe), ref)
    mean_curve = curves.mean(axis=0)
    baseline = float(intra.mean())
    beyond = depths > DEFAULT_DEAD_ZONE_MM
    above = np.nonzero(mean_curve > 2 * baseline)[0]
    onset = float(depths[above[0]]) if above.size else float("nan")
    report = DetectionReport(scenario=Scenario.DEPTH_SWEEP.value, frontend=fe.value, threshold=2 * baseline)
    for i, pos in enumerate(holes):
        report.holes.append(
            HoleResult(i, pos[0], pos[1], bool(curves[i, -1] > 2 * baseline), depths.size,
                       int(np.sum(curves[i] > 2 * baseline)), float(np.median(curves[i])), float(curves[i].max()))
        )
    report.metrics.update(
        mean_intra=baseline,
        max_intra=float(intra.max()),
        onset_depth=onset,
        spearman_beyond_dead_zone=_spearman(depths[beyond], mean_curve[beyond]),
        dead_zone=DEFAULT_DEAD_ZONE_MM,
    )
    report.curves.update(depths=depths, mean_mnd=mean_curve, per_hole=curves, intra=intra)
    return report


def run_diameter_sweep(spec: ExperimentSpec) -> DetectionReport:
    """Needles of increasing diameter at a few fixed depths, along the main axis."""
    _expect(spec, Scenario.DIAMETER_SWEEP)
    p: DiameterSweepParams = spec.params
    fe = _frontend(spec)
    clean = synth_enclosure(spec.resolved_enclosure())
    rig = Rig(spec)
    holes = [(float(x), 0.5) for x in np.linspace(0.1, 0.9, p.n_holes)]
    diam = np.asarray(p.diameters, dtype=float)
    result = np.empty((len(p.depths), len(holes), diam.size))
    intra = np.empty(len(holes))
    for h, pos in enumerate(holes):
        ref = rig.measure(clean, fe)
        intra[h] = mnd(rig.measure(clean, fe), ref)
        for a, depth in enumerate(p.depths):
            for b, d in enumerate(diam):
                taps = apply_perturbation(clean, _needle(pos, d, depth))
                result[a, h, b] = mnd(rig.measure(taps, fe), ref)
    mean = result.mean(axis=1)
    nz = diam > 0
    control = result[:, :, ~nz].ravel()
    report = DetectionReport(scenario=Scenario.DIAMETER_SWEEP.value, frontend=fe.value, threshold=float(intra.max()))
    for h, pos in enumerate(holes):
        report.holes.append(
            HoleResult(h, pos[0], pos[1], bool(np.all(result[:, h, -1] > intra.max())), result[:, h].size,
                       int(np.sum(result[:, h] > intra.max())), float(np.median(result[:, h])), float(result[:, h].max()))
        )
    for a, depth in enumerate(p.depths):
        report.metrics[f"r_squared_{depth:g}mm"] = _r_squared(diam[nz], mean[a, nz])
        report.metrics[f"max_over_min_diameter_{depth:g}mm"] = float(mean[a, -1] / mean[a, np.argmax(nz)])
    if control.size:
        report.metrics["control_vs_intra_pvalue"] = float(
            stats.mannwhitneyu(control, intra, alternative="two-sided").pvalue
        )
    report.metrics["mean_intra"] = float(intra.mean())
    report.curves.update(diameters=diam, depths=np.asarray(p.depths), mean_mnd=mean, intra=intra, control=control)
    return report


def run_loading_comparison(spec: ExperimentSpec) -> DetectionReport:
    """Identical insertions into every hole of differently loaded boxes."""
    _expect(spec, Scenario.LOADING_COMPARISON)
    p: LoadingComparisonParams = spec.params
    fe = _frontend(spec)
    nx, ny = p.lid_grid
    holes = hole_grid(nx, ny)
    xs = sorted({h[0] for h in holes})
    ys = sorted({h[1] for h in holes})
    border = np.array([_is_border(h, nx, ny, xs, ys) for h in holes])
    report = DetectionReport(scenario=Scenario.LOADING_COMPARISON.value, frontend=fe.value)
    delay_axis = spec.vna.grid.delay_grid()
    for k, name in enumerate(p.loadings):
        loading = Loading(name)
        profile = spec.resolved_enclosure(loading)
        clean = synth_enclosure(profile)
        rig = Rig(spec, seed_offset=k + 1)
        intra = np.empty(len(holes))
        insertion = np.empty(len(holes))
        for i, pos in enumerate(holes):
            ref = rig.measure(clean, fe)
            intra[i] = mnd(rig.measure(clean, fe), ref)
            taps = apply_perturbation(clean, _needle(pos, p.diameter, p.depth))
            insertion[i] = mnd(rig.measure(taps, fe), ref)
        pdp = power_delay_profile(taps_to_frequency_response(clean, spec.vna.grid))
        sigmas = [
            rms_delay_spread(np.abs(t.gains) ** 2, t.delays)
            for t in (synth_enclosure(replace(profile, seed=profile.seed + s)) for s in range(p.sigma_seeds))
        ]
        report.metrics.update(
            {
                f"{name}_mean_insertion": float(insertion.mean()),
                f"{name}_min_insertion": float(insertion.min()),
                f"{name}_mean_intra": float(intra.mean()),
                f"{name}_max_intra": float(intra.max()),
                f"{name}_border_mean": float(insertion[border].mean()),
                f"{name}_interior_mean": float(insertion[~border].mean()),
                f"{name}_rms_delay_spread_taps": rms_delay_spread(np.abs(clean.gains) ** 2, clean.delays),
                f"{name}_rms_delay_spread_pdp": rms_delay_spread(pdp, delay_axis),
                f"{name}_rms_delay_spread_mean20": float(np.mean(sigmas)),
            }
        )
        report.curves[f"{name}_heatmap"] = insertion.reshape(ny, nx)
        report.curves[f"{name}_intra"] = intra
        report.curves[f"{name}_pdp"] = pdp
        if loading is Loading(p.loadings[-1]):
            report.threshold = float(intra.max())
            for i, pos in enumerate(holes):
                report.holes.append(
                    HoleResult(i, pos[0], pos[1], bool(insertion[i] > intra.max()), 1,
                               int(insertion[i] > intra.max()), float(insertion[i]), float(insertion[i]))
                )
    report.curves["pdp_delays"] = delay_axis
    return report


def run_heatmap(spec: ExperimentSpec) -> DetectionReport:
    """Position sensitivity of a quiet (unpowered) server enclosure."""
    _expect(spec, Scenario.HEATMAP)
    p: HeatmapParams = spec.params
    fe = _frontend(spec)
    profile = spec.resolved_enclosure()
    if profile.insensitive_region is None:
        profile = replace(profile, insensitive_region=p.insensitive_region)
    clean = synth_enclosure(profile)
    rig = Rig(spec)
    nx, ny = p.lid_grid
    holes = hole_grid(nx, ny)
    intra = np.empty(len(holes))
    insertion = np.empty(len(holes))
    for i, pos in enumerate(holes):
        ref = rig.measure(clean, fe)
        intra[i] = mnd(rig.measure(clean, fe), ref)
        insertion[i] = mnd(rig.measure(apply_perturbation(clean, _needle(pos, p.diameter, p.depth)), fe), ref)
    x0, y0, x1, y1 = profile.insensitive_region
    shadow = np.array([x0 <= x <= x1 and y0 <= y <= y1 for x, y in holes])
    thr = float(intra.max())
    report = DetectionReport(scenario=Scenario.HEATMAP.value, frontend=fe.value, threshold=thr)
    for i, pos in enumerate(holes):
        report.holes.append(
            HoleResult(i, pos[0], pos[1], bool(insertion[i] > thr), 1, int(insertion[i] > thr),
                       float(insertion[i]), float(insertion[i]))
        )
    report.metrics.update(
        sensitive_mean=float(insertion[~shadow].mean()) if (~shadow).any() else float("nan"),
        insensitive_mean=float(insertion[shadow].mean()) if shadow.any() else float("nan"),
        sensitive_detected=int(np.sum(insertion[~shadow] > thr)),
        sensitive_total=int((~shadow).sum()),
        insensitive_detected=int(np.sum(insertion[shadow] > thr)),
        insensitive_total=int(shadow.sum()),
    )
    report.curves.update(heatmap=insertion.reshape(ny, nx), intra=intra, insensitive=shadow.reshape(ny, nx))
    return report


SERVER_STATE_SEQUENCE = (
    ("off", DriftState()),
    ("psu", DriftState(psu_on=True)),
    ("boot", DriftState(psu_on=True, booted=True, cpu_load=0.5)),
    ("idle", DriftState(psu_on=True, booted=True, cpu_load=0.0)),
    ("load", DriftState(psu_on=True, booted=True, cpu_load=1.0)),
    ("idle2", DriftState(psu_on=True, booted=True, cpu_load=0.0)),
)


def _fan_phase(rng: np.random.Generator) -> float:
    return float(rng.uniform(0.0, 2.0 * np.pi))


def run_server_states(spec: ExperimentSpec) -> DetectionReport:
    """Response distance to the powered-off reference across server operating states."""
    _expect(spec, Scenario.SERVER_STATES)
    p: ServerStatesParams = spec.params
    fe = _frontend(spec)
    clean = synth_enclosure(spec.resolved_enclosure())
    rig = Rig(spec)
    rng = np.random.default_rng([spec.seed, 0x5E])
    thermal = ThermalModel(p.thermal_time_constant, p.load_temperature_rise)
    ref = rig.measure(clean, fe, 0.0)
    times, values, labels = [], [], []
    t = 0.0
    for name, state in SERVER_STATE_SEQUENCE:
        for _ in range(p.samples_per_state):
            t += p.cadence
            load = state.cpu_load if state.booted else 0.0
            temp = thermal.step(load, p.cadence)
            fans = state.psu_on or state.booted
            drift = replace(state, temperature_offset=temp, fan_phase=_fan_phase(rng) if fans else 0.0)
            values.append(mnd(rig.measure(apply_drift(clean, drift), fe, t), ref))
            times.append(t)
            labels.append(name)
    values = np.asarray(values)
    labels = np.asarray(labels)
    report = DetectionReport(scenario=Scenario.SERVER_STATES.value, frontend=fe.value)
    settled = {}
    for name, _ in SERVER_STATE_SEQUENCE:
        v = values[labels == name]
        v = v[v.size // 2 :]
        settled[name] = v
        report.metrics[f"{name}_mean"] = float(v.mean())
        report.metrics[f"{name}_std"] = float(v.std(ddof=1)) if v.size > 1 else 0.0
    within = max(report.metrics[f"{n}_std"] for n in ("off", "psu"))
    report.metrics["psu_jump_over_std"] = float(
        (settled["psu"].mean() - settled["off"].mean()) / within if within > 0 else math.inf
    )
    report.metrics["idle2_closer_to_idle"] = bool(
        abs(settled["idle2"].mean() - settled["idle"].mean()) < abs(settled["idle2"].mean() - settled["load"].mean())
    )
    report.curves.update(time=np.asarray(times), mnd=values, state=labels.tolist())
    return report


def run_lid_removal(spec: ExperimentSpec) -> DetectionReport:
    """Intra, needle and lid-off samples against one initial reference."""
    _expect(spec, Scenario.LID_REMOVAL)
    p: LidRemovalParams = spec.params
    fe = _frontend(spec)
    clean = synth_enclosure(spec.resolved_enclosure())
    rig = Rig(spec)
    needle = apply_perturbation(clean, _needle(p.position, p.diameter, p.depth))
    lid = apply_perturbation(clean, PerturbationEvent(PerturbationKind.LID_REMOVAL, p.position))
    ref = rig.measure(clean, fe)
    segments = {}
    for name, taps in (("intra", clean), ("needle", needle), ("lid", lid)):
        segments[name] = np.array([mnd(rig.measure(taps, fe), ref) for _ in range(p.samples)])
    intra, ndl, lidv = segments["intra"], segments["needle"], segments["lid"]
    report = DetectionReport(scenario=Scenario.LID_REMOVAL.value, frontend=fe.value, threshold=float(intra.max()))
    report.metrics.update(
        intra_median=float(np.median(intra)),
        intra_max=float(intra.max()),
        needle_median=float(np.median(ndl)),
        needle_min=float(ndl.min()),
        needle_max=float(ndl.max()),
        lid_median=float(np.median(lidv)),
        lid_min=float(lidv.min()),
        ordered=bool(np.median(intra) < np.median(ndl) < np.median(lidv)),
        lid_separated=bool(lidv.min() > ndl.max()),
        needle_separated=bool(ndl.min() > intra.max()),
    )
    report.curves.update(intra=intra, needle=ndl, lid=lidv)
    return report


# ---------------------------------------------------------------------------
# long-term monitoring


def provisioning_loads(seed: int, n: int, cadence: float, hold: tuple[float, float]) -> np.ndarray:
    """Randomized CPU load (0 % or 100 %) held for random durations, one value per sample."""
    rng = np.random.default_rng([seed, 0x9A])
    out = np.empty(n)
    i = 0
    level = 0.0
    while i < n:
        k = max(1, int(round(rng.uniform(*hold) / cadence)))
        out[i : i + k] = level
        i += k
        level = 1.0 - level
    return out


def longterm_records(spec: ExperimentSpec) -> dict[Frontend, list[TraceRecord]]:
    """Simulate provisioning plus the long-term load-cycling run.

    One block-averaged intra response per cadence step; every ``probe_interval``
    an additional insertion response at the next hole of the sensitive grid.
    The first ``provisioning_count`` records of each trace are provisioning data
    taken under randomized load.
    """
    _expect(spec, Scenario.LONG_TERM)
    p: LongTermParams = spec.params
    frontends = spec.frontend.frontends()
    clean = synth_enclosure(spec.resolved_enclosure())
    rig = Rig(spec)
    rng = np.random.default_rng([spec.seed, 0x10])
    thermal = ThermalModel(p.thermal_time_constant, p.load_temperature_rise)
    holes = hole_grid(*p.hole_grid, p.sensitive_region)
    records: dict[Frontend, list[TraceRecord]] = {fe: [] for fe in frontends}
    needles = [apply_perturbation(clean, _needle(pos, p.diameter, p.depth)) for pos in holes]

    def emit(taps, drift, t, labels):
        drifted = apply_drift(taps, drift)
        for fe in frontends:
            r = rig.measure(drifted, fe, t)
            records[fe].append(TraceRecord(fe.value, t, r.values, labels))

    def state(load, temp):
        return DriftState(temperature_offset=temp, cpu_load=load, fan_phase=_fan_phase(rng), psu_on=True, booted=True)

    m = spec.monitor.provisioning_count
    t = 0.0
    for load in provisioning_loads(spec.seed, m, p.cadence, p.provisioning_hold):
        temp = thermal.step(load, p.cadence)
        emit(clean, state(load, temp), t, {"kind": "provisioning", "cpu_load": float(load)})
        t += p.cadence
    start = t
    steps = int(round(p.duration / p.cadence))
    probe_every = max(1, int(round(p.probe_interval / p.cadence)))
    probe = 0
    for step in range(steps):
        t = start + step * p.cadence
        load = 1.0 if (t - start) % p.load_period >= p.load_period / 2 else 0.0
        temp = thermal.step(load, p.cadence)
        drift = state(load, temp)
        emit(clean, drift, t, {"kind": "intra", "cpu_load": load})
        if step % probe_every == probe_every - 1:
            h = probe % len(holes)
            x, y = holes[h]
            labels = {"kind": "insertion", "hole": h, "x": x, "y": y, "cpu_load": load,
                      "diameter": p.diameter, "depth": p.depth}
            emit(needles[h], replace(drift, fan_phase=_fan_phase(rng)), t + p.cadence / 2, labels)
            probe += 1
    return records


def score_records(
    records: list[TraceRecord],
    monitor_config: MonitorConfig,
    band_window: float = 6 * 3600.0,
    expected_length: int | None = None,
    scenario: str = Scenario.LONG_TERM.value,
) -> DetectionReport:
    """Feed a trace through a monitor exactly as live ingestion and score it.

    The first ``provisioning_count`` records provision the monitor; every later
    record is ingested. Labels are read only afterwards, to attribute verdicts
    to intra samples and to holes.
    """
    report = DetectionReport(scenario=scenario, frontend=records[0].frontend if records else "")
    lengths = {r.values.size for r in records}
    if len(lengths) > 1:
        raise ArgumentError(f"trace mixes response lengths {sorted(lengths)}")
    if expected_length is not None and lengths and lengths != {expected_length}:
        raise ArgumentError(f"trace response length {lengths.pop()} != configured length {expected_length}")
    monitor = new_monitor(monitor_config)
    m = monitor_config.provisioning_count
    if len(records) < m:
        report.metrics.update(n_ingested=0, phase=monitor.phase.value, n_records=len(records))
        return report
    for r in records[:m]:
        monitor.ingest_provisioning(_as_response(r))
    monitor.finalize_provisioning()
    verdicts = [monitor.ingest(_as_response(r)) for r in records[m:]]
    deployed = records[m:]
    kinds = np.array([r.labels.get("kind", "") for r in deployed])
    values = np.array([v.mnd_value for v in verdicts])
    flagged = np.array([v.tampered for v in verdicts], dtype=bool)
    times = np.array([r.timestamp for r in deployed])
    intra = kinds == "intra"
    ins = kinds == "insertion"
    report.threshold = float(monitor.threshold)
    report.false_positive_count = int(np.sum(flagged & intra))
    zero_fp = max(monitor.threshold, float(values[intra].max())) if intra.any() else monitor.threshold
    hole_ids = np.array([r.labels.get("hole", -1) if k == "insertion" else -1 for r, k in zip(deployed, kinds)])
    sweeps = []
    if ins.any():
        n_holes = int(hole_ids.max()) + 1
        pos = {}
        for r in deployed:
            if r.labels.get("kind") == "insertion":
                pos.setdefault(int(r.labels["hole"]), (float(r.labels.get("x", math.nan)), float(r.labels.get("y", math.nan))))
        for h in range(n_holes):
            v = values[hole_ids == h]
            if v.size == 0:
                continue
            hits = int(np.sum(v > zero_fp))
            report.holes.append(
                HoleResult(h, *pos[h], detected=hits * 2 > v.size, n_probes=int(v.size), n_detected=hits,
                           median_mnd=float(np.median(v)), max_mnd=float(v.max()))
            )
        probe_vals = values[ins]
        for s in range(0, probe_vals.size - n_holes + 1, n_holes):
            sweeps.append(int(np.sum(probe_vals[s : s + n_holes] > zero_fp)))
    report.metrics.update(
        n_ingested=len(verdicts),
        phase=monitor.phase.value,
        zero_fp_threshold=float(zero_fp),
        apriori_detected_probes=int(np.sum(flagged & ins)),
        zero_fp_detected_probes=int(np.sum(values[ins] > zero_fp)),
        n_probes=int(ins.sum()),
        intra_max=float(values[intra].max()) if intra.any() else float("nan"),
        kept_indices=int(monitor.mask.n_kept),
        sweep_min=min(sweeps) if sweeps else 0,
        sweep_median=float(np.median(sweeps)) if sweeps else 0.0,
        sweep_max=max(sweeps) if sweeps else 0,
    )
    report.bands = quantile_bands(times[intra], values[intra], "intra", band_window) + quantile_bands(
        times[ins], values[ins], "insertion", band_window
    )
    return report


def _as_response(record: TraceRecord) -> Response:
    return Response(record.values, Frontend(record.frontend), record.timestamp)


def run_longterm(spec: ExperimentSpec, records: dict | None = None) -> dict[str, DetectionReport]:
    """Ten days of load cycling with periodic insertions, masked and unmasked.

    Returns reports keyed ``"<frontend>"`` (with spectrum selection) and
    ``"<frontend>_unmasked"``.
    """
    p: LongTermParams = spec.params
    if records is None:
        records = longterm_records(spec)
    out = {}
    for fe, recs in records.items():
        fe = Frontend(fe)
        out[fe.value] = score_records(recs, spec.monitor, p.band_window)
        out[fe.value + "_unmasked"] = score_records(recs, replace(spec.monitor, drop_fraction=0.0), p.band_window)
    return out


def replay(trace_path, monitor_config: MonitorConfig, expected_length: int | None = None,
           band_window: float = 6 * 3600.0) -> DetectionReport:
    """Score a recorded trace exactly as :func:`run_longterm` scores live data."""
    return score_records(read_trace(trace_path), monitor_config, band_window, expected_length)


def _expect(spec: ExperimentSpec, scenario: Scenario) -> None:
    if spec.scenario is not scenario:
        raise ArgumentError(f"spec is for {spec.scenario.value}, expected {scenario.value}")


RUNNERS = {
    Scenario.DEPTH_SWEEP: run_depth_sweep,
    Scenario.DIAMETER_SWEEP: run_diameter_sweep,
    Scenario.LOADING_COMPARISON: run_loading_comparison,
    Scenario.HEATMAP: run_heatmap,
    Scenario.SERVER_STATES: run_server_states,
    Scenario.LONG_TERM: run_longterm,
    Scenario.LID_REMOVAL: run_lid_removal,
}


def run(spec: ExperimentSpec) -> dict[str, DetectionReport]:
    """Run any scenario; single-report scenarios are keyed by frontend."""
    result = RUNNERS[spec.scenario](spec)
    if isinstance(result, DetectionReport):
        return {result.frontend: result}
    return result


def evaluate_targets(scenario: Scenario | str, reports: dict[str, DetectionReport]) -> dict[str, bool]:
    """Pass/fail of each scenario's expected qualitative outcome."""
    scenario = Scenario(scenario)
    r = next(iter(reports.values()))
    m = r.metrics
    if scenario is Scenario.DEPTH_SWEEP:
        depths = np.asarray(r.curves["depths"])
        mean = np.asarray(r.curves["mean_mnd"])
        shallow = mean[depths <= m["dead_zone"]]
        return {
            "below_dead_zone_near_intra": bool(np.all(shallow < 2 * m["mean_intra"] + 1e-12)),
            "spearman_beyond_dead_zone_gt_0.95": m["spearman_beyond_dead_zone"] > 0.95,
            "onset_after_dead_zone": m["onset_depth"] > m["dead_zone"],
        }
    if scenario is Scenario.DIAMETER_SWEEP:
        out = {k: v > 0.9 for k, v in m.items() if k.startswith("r_squared_")}
        out.update({k: v > 1 for k, v in m.items() if k.startswith("max_over_min_diameter_")})
        if "control_vs_intra_pvalue" in m:
            out["control_indistinguishable"] = m["control_vs_intra_pvalue"] > 0.01
        return out
    if scenario is Scenario.LOADING_COMPARISON:
        names = [k[: -len("_mean_insertion")] for k in m if k.endswith("_mean_insertion")]
        sig = [m[f"{n}_rms_delay_spread_mean20"] for n in names]
        ins = [m[f"{n}_mean_insertion"] for n in names]
        last = names[-1]
        return {
            "rms_delay_spread_ordering": all(a > b for a, b in zip(sig, sig[1:])),
            "insertion_ordering": all(a > b for a, b in zip(ins, ins[1:])),
            f"{last}_every_hole_detectable": m[f"{last}_min_insertion"] > m[f"{last}_max_intra"],
            "border_below_interior": all(m[f"{n}_border_mean"] < m[f"{n}_interior_mean"] for n in names),
        }
    if scenario is Scenario.HEATMAP:
        return {"insensitive_region_weaker": m["insensitive_mean"] < m["sensitive_mean"]}
    if scenario is Scenario.SERVER_STATES:
        return {
            "psu_jump_gt_5_std": m["psu_jump_over_std"] > 5,
            "idle2_closer_to_idle": bool(m["idle2_closer_to_idle"]),
        }
    if scenario is Scenario.LID_REMOVAL:
        return {
            "ordering": bool(m["ordered"]),
            "lid_needle_separated": bool(m["lid_separated"]),
            "median_lid_above_max_needle": m["lid_median"] > m["needle_max"],
        }
    out = {}
    for fe in (Frontend.VNA, Frontend.UWB):
        if fe.value not in reports:
            continue
        rep = reports[fe.value]
        share = 0.95 if fe is Frontend.VNA else 0.75
        out[f"{fe.value}_detection_ge_{int(share * 100)}pct"] = rep.detected_count >= share * rep.total
        if fe.value + "_unmasked" in reports:
            out[f"{fe.value}_masked_ge_unmasked"] = rep.detected_count >= reports[fe.value + "_unmasked"].detected_count
    if "vna" in reports and "uwb" in reports:
        out["uwb_not_above_vna"] = reports["uwb"].detected_count <= reports["vna"].detected_count
    return out
