"""Run every scenario with one seed and write reports, traces and CSVs.

Usage: python scripts/run_experiments.py --seed 1 --out results/
"""

import argparse
import json
import time
from pathlib import Path

from atr.cli import main as cli_main
from atr.harness import Scenario


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--skip", nargs="*", default=[], choices=[s.value for s in Scenario])
    return p.parse_args()


def main():
    args = parse_args()
    summary = {}
    for scenario in Scenario:
        if scenario.value in args.skip:
            continue
        out = args.out / scenario.value
        frontend = "both" if scenario is Scenario.LONG_TERM else "vna"
        t0 = time.perf_counter()
        print(f"== {scenario.value}")
        code = cli_main(["simulate", scenario.value, "--seed", str(args.seed), "--frontend", frontend, "--out", str(out)])
        summary[scenario.value] = {"exit_code": code, "seconds": round(time.perf_counter() - t0, 1)}
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    print(json.dumps(summary, indent=1))
    return max((v["exit_code"] for v in summary.values()), default=0)


if __name__ == "__main__":
    raise SystemExit(main())
