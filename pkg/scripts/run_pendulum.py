"""Synthesize the pendulum controller and run the swing-up from rest.

    python scripts/run_pendulum.py                       # desk scale, 20 x 16
    python scripts/run_pendulum.py --scenario pendulum   # 40 x 32, 13 amplitudes (slow)
"""

import argparse
import json
import logging
import time
from pathlib import Path

import numpy as np

from chc.archive import mode_summary, save_archive, trajectory_csv
from chc.graph import check_reachability
from chc.scenario import load_scenario
from chc.supervisor import run_closed_loop
from chc.synthesis import synthesize


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scenario", default="pendulum_desk")
    ap.add_argument("--out", type=Path, default=Path("runs/pendulum"))
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    sc = load_scenario(args.scenario)
    t0 = time.perf_counter()
    syn = synthesize(sc.model, sc.family, sc.options, sc.des)
    wall = time.perf_counter() - t0
    print(f"{sc.name}: {syn.stats['elements']} elements, {syn.stats['edges']} edges, "
          f"reachable fraction {syn.reachable_fraction():.3f}, synthesis {wall:.1f} s")
    print(f"start element reachable: {check_reachability(syn.rs, syn.partition, sc.init)}")

    ctrl = sc.controller(syn)
    run = run_closed_loop(ctrl, sc.init)
    summary = mode_summary(run, swing_dim=1)
    print(f"status {run.status}, capture time {run.capture_time}, swings {summary['swings']}, "
          f"max |T| {summary['max_abs_input'][0]:.3f}")
    if run.message:
        print(run.message)
    states = np.array(run.states)
    print(f"final state {states[-1].round(4).tolist()}, peak |theta_dot| {np.abs(states[:, 1]).max():.3f}")

    args.out.mkdir(parents=True, exist_ok=True)
    save_archive(args.out / "synthesis.chc", syn, sc.family, sc.document)
    (args.out / "trajectory.csv").write_text(trajectory_csv(run))
    (args.out / "modes.json").write_text(json.dumps(summary, indent=2) + "\n")


if __name__ == "__main__":
    main()
