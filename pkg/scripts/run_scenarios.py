"""Run the bundled time-domain scenarios and summarize each trace.

Writes one CSV per scenario into --out (default: traces/) and prints the
termination status, the final load voltages for completed runs, and the
collapse time otherwise.

Usage: python3 scripts/run_scenarios.py [--out DIR]
"""

import argparse
import pathlib
import sys
import time

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from dcgrid import load_scenario, simulate

EXAMPLES = pathlib.Path(__file__).resolve().parents[1] / "examples"
SCENARIOS = [
    "load_step_stable.json",
    "load_step_collapse.json",
    "soft_start_high_uref.json",
]


def run_one(name, out_dir):
    scenario = load_scenario(EXAMPLES / name)
    t0 = time.perf_counter()
    trace = simulate(scenario)
    wall = time.perf_counter() - t0

    out = out_dir / (pathlib.Path(name).stem + ".csv")
    with open(out, "w") as fh:
        trace.to_csv(fh)

    print(f"\n== {name} ==")
    print(f"   horizon {scenario.horizon:g} s, dt {scenario.dt:g} s, "
          f"{len(trace.t)} stored samples, {wall:.1f} s wall clock")
    for t_ev, desc in trace.events:
        print(f"   event at t = {t_ev:g} s: {desc}")
    if trace.termination == "collapsed":
        print(f"   COLLAPSED at t = {trace.collapse_time:.5f} s "
              f"(node {trace.collapse_node})")
    else:
        with np.printoptions(precision=2, suppress=True):
            print(f"   completed; final u_load = {trace.u_load[-1]} V")
    print(f"   trace written to {out}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path("traces"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name in SCENARIOS:
        run_one(name, args.out)


if __name__ == "__main__":
    main()
