"""Command line: ``chc synthesize``, ``chc simulate`` and ``chc export``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from chc.archive import (
    edges_csv,
    graph_to_dot,
    load_archive,
    mode_summary,
    nodes_csv,
    save_archive,
    trajectory_csv,
)
from chc.errors import CHCError
from chc.graph import check_reachability
from chc.scenario import load_scenario
from chc.supervisor import run_closed_loop
from chc.synthesis import synthesize


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _amplitudes(text: str) -> list[list[float]]:
    """``-0.9,0,0.9`` for one channel; channels separated by ``;``."""
    return [_floats(ch) for ch in text.split(";")]


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", default="pendulum_desk", help="bundled name or JSON path")
    p.add_argument("--seed-grid", type=_ints, help="elements per dimension, e.g. 20,16")
    p.add_argument("--amplitudes", type=_amplitudes, help="levels per channel, channels split by ';'")
    p.add_argument("--budget", type=int, help="cap on the symbolic-input family size")
    p.add_argument("--init", type=_floats, help="initial state")
    p.add_argument("--des", type=_floats, help="set point")
    p.add_argument("--noise-seed", type=int, help="measurement noise seed")
    p.add_argument("--out", type=Path, required=True, help="output file or directory")


def _scenario(args):
    return load_scenario(args.scenario, seed=args.seed_grid, amplitudes=args.amplitudes,
                         budget=args.budget, init=args.init, des=args.des, noise_seed=args.noise_seed)


def _synthesize(sc):
    t0 = time.perf_counter()
    syn = synthesize(sc.model, sc.family, sc.options, sc.des)
    return syn, time.perf_counter() - t0


def cmd_synthesize(args) -> int:
    sc = _scenario(args)
    syn, wall = _synthesize(sc)
    save_archive(args.out, syn, sc.family, sc.document)
    print(f"elements: {syn.stats['elements']}")
    print(f"edges: {syn.stats['edges']}")
    print(f"reachable fraction: {syn.reachable_fraction():.4f}")
    print(f"wall time: {wall:.2f} s")
    return 0


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    if args.archive is not None:
        syn, _, _ = load_archive(args.archive)
    else:
        syn, wall = _synthesize(sc)
        print(f"synthesis wall time: {wall:.2f} s")
    if not check_reachability(syn.rs, syn.partition, sc.init):
        print(f"initial state {sc.init.tolist()} is not in the reachability sector", file=sys.stderr)
    run = run_closed_loop(sc.controller(syn), sc.init)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "trajectory.csv").write_text(trajectory_csv(run))
    summary = mode_summary(run, swing_dim=1 if sc.system == "pendulum" else None)
    (args.out / "modes.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"status: {run.status}")
    print(f"capture time: {run.capture_time}")
    if "swings" in summary:
        print(f"swings: {summary['swings']}")
    print(f"max |u|: {summary['max_abs_input']}")
    print(f"final state: {run.states[-1].tolist()}")
    return 0 if run.status == "captured" else 1


def cmd_export(args) -> int:
    syn, _, _ = load_archive(args.archive)
    if args.what == "dot":
        text = graph_to_dot(syn.graph, syn.rs)
    elif args.what == "nodes":
        text = nodes_csv(syn.partition, syn.rs)
    else:
        text = edges_csv(syn.graph)
    args.out.write_text(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="partition, transition graph and reachability sector")
    _add_scenario_flags(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="run the closed loop")
    _add_scenario_flags(p)
    p.add_argument("--archive", type=Path, help="reuse a synthesis archive instead of re-synthesizing")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export", help="dump an archive as DOT or CSV")
    p.add_argument("archive", type=Path)
    p.add_argument("what", choices=("dot", "nodes", "edges"))
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CHCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
