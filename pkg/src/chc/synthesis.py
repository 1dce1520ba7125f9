"""Offline pipeline: partition -> operating nodes -> transition graph -> reachability sector."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from chc.dynamics import HybridSystemModel
from chc.errors import ConfigurationError
from chc.graph import (
    ReachabilitySector,
    SymbolicInputFamily,
    TransitionGraph,
    build_transition_graph,
    dijkstra_rs,
    prune_multigraph,
    weigh_edges,
)
from chc.partition import Partition, attach_local_models, build_partition, place_operating_nodes

log = logging.getLogger(__name__)


@dataclass
class SynthesisOptions:
    seed: tuple[int, ...]
    Q1: np.ndarray
    Q2: np.ndarray
    R: np.ndarray
    p: float = 2
    t_fs_max: float | None = None
    probes: str = "center"
    inset: float = 0.1
    downstream: bool = True
    step: float | None = None
    edge_weight: str = "goal_distance"


@dataclass
class Synthesis:
    partition: Partition
    graph: TransitionGraph
    rs: ReachabilitySector
    stats: dict = field(default_factory=dict)

    def reachable_fraction(self) -> float:
        safe = int((~self.partition.unsafe_mask()).sum())
        return (len(self.rs.next_hop) + 1) / max(safe, 1)


def synthesize(model: HybridSystemModel, family: SymbolicInputFamily, opts: SynthesisOptions,
               des) -> Synthesis:
    des = np.asarray(des, dtype=float)
    if not model.in_domain(des)[0]:
        raise ConfigurationError(f"destination {des.tolist()} outside the state domain")
    t0 = time.perf_counter()
    part = build_partition(model.state_bounds, opts.seed)
    attach_local_models(part, model)
    t_fs_max = opts.t_fs_max if opts.t_fs_max is not None else family.horizon
    place_operating_nodes(part, model, t_fs_max, opts.probes, opts.inset, opts.downstream)
    t1 = time.perf_counter()
    tg = build_transition_graph(part, model, family, opts.Q1, opts.p, opts.step, prune=True)
    tg = prune_multigraph(tg)
    tg = weigh_edges(tg, part, family, des, opts.Q2, opts.R, opts.p, opts.edge_weight)
    t2 = time.perf_counter()
    rs = dijkstra_rs(tg, part, des)
    t3 = time.perf_counter()
    stats = {
        "elements": len(part),
        "edges": len(tg),
        "signals": int(family.signal_ids().size),
        "node_placement_s": t1 - t0,
        "graph_s": t2 - t1,
        "dijkstra_s": t3 - t2,
    }
    log.info("synthesis: %s", stats)
    return Synthesis(part, tg, rs, stats)
