"""Print the quantities the model constants were tuned against.

* needle / short-term intra ratios per loading (0.3 mm at 45 mm)
* server: needle (1 mm at 40 mm) against thermal and fan drift, noiseless
* UWB detection on short long-term runs across a range of noise levels

Usage: python scripts/calibrate.py [--seeds 1 2 3] [--uwb-noise 0.01 0.012 0.016]
"""

import argparse
from dataclasses import replace

import numpy as np

from atr.acquisition import UwbConfig, VnaConfig, acquire_uwb, acquire_vna
from atr.channel import DriftState, EnclosureProfile, NoiseParams, apply_drift, apply_perturbation, synth_enclosure
from atr.detection import mnd
from atr.harness import ExperimentSpec, _needle, hole_grid, run, run_longterm


def loading_ratios(seed):
    r = run(ExperimentSpec.from_dict({"scenario": "loading_comparison", "seed": seed}))["vna"].metrics
    for name in ("empty", "mainboard", "absorber"):
        print(
            f"  seed {seed} {name:9s} insertion/intra {r[name + '_mean_insertion'] / r[name + '_mean_intra']:7.1f}"
            f"  min insertion/max intra {r[name + '_min_insertion'] / r[name + '_max_intra']:5.2f}"
        )


def server_components(seed):
    clean = synth_enclosure(EnclosureProfile.for_loading("server", seed=seed))
    base = DriftState(psu_on=True, booted=True)
    quiet = NoiseParams(0.0, 0)
    frontends = {
        "vna": lambda t: acquire_vna(t, VnaConfig(), quiet, 0).values,
        "uwb": lambda t: acquire_uwb(t, UwbConfig(), quiet, 0).values,
    }
    rng = np.random.default_rng(seed)
    holes = hole_grid(13, 9, (0.3, 0.15, 0.95, 0.85))
    for name, measure in frontends.items():
        ref = measure(apply_drift(clean, base))
        thermal = mnd(measure(apply_drift(clean, replace(base, temperature_offset=20.0))), ref)
        fan = max(
            mnd(measure(apply_drift(clean, replace(base, cpu_load=1.0, fan_phase=rng.uniform(0, 2 * np.pi)))), ref)
            for _ in range(20)
        )
        needle = [mnd(measure(apply_drift(apply_perturbation(clean, _needle(p, 1.0, 40.0)), base)), ref) for p in holes]
        print(
            f"  seed {seed} {name}: thermal(20 K) {thermal:.2e}  fan max {fan:.2e}  "
            f"needle min {min(needle):.2e} median {np.median(needle):.2e}"
        )


def uwb_sweep(seed, noise, days):
    spec = ExperimentSpec.from_dict(
        {"scenario": "longterm", "seed": seed, "frontend": "uwb", "params": {"duration": days * 86400},
         "noise": {"uwb": noise}}
    )
    r = run_longterm(spec)["uwb"]
    print(f"  seed {seed} uwb noise {noise}: {r.detected_count}/{r.total} at zero FP ({days} days)")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--uwb-noise", type=float, nargs="*", default=[0.01, 0.012, 0.016])
    p.add_argument("--days", type=float, default=2.0)
    args = p.parse_args()
    print("loading comparison")
    for s in args.seeds:
        loading_ratios(s)
    print("server drift components (unmasked MND)")
    for s in args.seeds:
        server_components(s)
    print("UWB noise sweep")
    for s in args.seeds:
        for n in args.uwb_noise:
            uwb_sweep(s, n, args.days)


if __name__ == "__main__":
    main()
