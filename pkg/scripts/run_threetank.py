"""Synthesize the three-tank controller and fill the tanks over several noise seeds.

    python scripts/run_threetank.py --seeds 0 1 2 3
"""

import argparse
import logging
import time
from pathlib import Path

import numpy as np

from chc.archive import save_archive, trajectory_csv
from chc.scenario import load_scenario
from chc.supervisor import run_closed_loop
from chc.synthesis import synthesize


def first_within(times, states, des, tol):
    hit = np.flatnonzero(np.max(np.abs(states - des), axis=1) <= tol)
    return float(times[hit[0]]) if hit.size else None


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scenario", default="threetank_desk")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--tol", type=float, default=0.05, help="per-tank band around the set point [m]")
    ap.add_argument("--out", type=Path, default=Path("runs/threetank"))
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    sc = load_scenario(args.scenario)
    t0 = time.perf_counter()
    syn = synthesize(sc.model, sc.family, sc.options, sc.des)
    print(f"{sc.name}: {syn.stats['elements']} elements, {syn.stats['edges']} edges, "
          f"reachable fraction {syn.reachable_fraction():.3f}, synthesis {time.perf_counter() - t0:.1f} s")
    args.out.mkdir(parents=True, exist_ok=True)
    save_archive(args.out / "synthesis.chc", syn, sc.family, sc.document)

    for seed in args.seeds:
        sc_seed = load_scenario(args.scenario, noise_seed=seed)
        run = run_closed_loop(sc_seed.controller(syn), sc_seed.init)
        times, states, _, inputs, _ = run.arrays()
        hit = first_within(times, states, sc.des, args.tol)
        print(f"noise seed {seed}: first within {args.tol} m at {hit} s, status {run.status}, "
              f"t_end {times[-1]:.0f} s, max pump {inputs.max():.3g}")
        (args.out / f"trajectory_seed{seed}.csv").write_text(trajectory_csv(run))


if __name__ == "__main__":
    main()
