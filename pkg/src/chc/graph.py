"""Transition graph construction and its reduction to a reachability sector.

Every safe element's operating node is simulated under every symbolic input
for one horizon.  The element holding the end state becomes the head of a
directed edge.  Parallel edges are pruned by the endpoint distance to the
head's operating node (``j1``); survivors are weighted by the head's distance
to the set point plus input effort (``j2``); a single Dijkstra run on the
reversed graph then gives every element its next hop toward the destination.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from chc.dynamics import BinaryVector, HybridSystemModel, PiecewiseConstantSignal, integrate_batch
from chc.errors import BudgetError, ConfigurationError
from chc.partition import Partition

log = logging.getLogger(__name__)


def weighted_norm(X, Q, p=2) -> np.ndarray:
    """Row-wise ``||x||_Q^p``.

    ``p == 2`` is the quadratic form ``x' Q x``; other orders use
    ``||Q x||_p ** p`` (``||Q x||_inf`` for ``p = inf``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if p == 2:
        return np.einsum("ki,ij,kj->k", X, Q, X)
    QX = X @ Q.T
    if np.isinf(p):
        return np.max(np.abs(QX), axis=1)
    return np.sum(np.abs(QX) ** p, axis=1)


@dataclass
class SymbolicInputFamily:
    """Piecewise-constant candidate inputs over one horizon.

    Per interval a level is one continuous amplitude per channel together
    with one binary vector.  Signals are numbered in the mixed-radix order of
    their per-interval level indices (first interval most significant), so an
    ``input_id`` is stable whether or not the family is subsampled.
    """

    horizon: float
    intervals: int
    amplitudes: list[list[float]]
    binary_combinations: list[BinaryVector] = field(default_factory=lambda: [()])
    budget: int = 100_000
    sample: int | None = None
    sample_seed: int = 0
    include_constant: bool = True

    def __post_init__(self):
        self.amplitudes = [[float(a) for a in ch] for ch in self.amplitudes]
        self.binary_combinations = [tuple(int(b) for b in c) for c in self.binary_combinations] or [()]
        if self.intervals < 1 or self.horizon <= 0:
            raise ConfigurationError("symbolic inputs need a positive horizon and >= 1 interval")

    @property
    def interval_duration(self) -> float:
        return self.horizon / self.intervals

    def level_table(self):
        """``(L, m)`` continuous levels and the matching ``L`` binary vectors."""
        cont, binary = [], []
        for b in self.binary_combinations:
            for c in itertools.product(*self.amplitudes):
                cont.append(c)
                binary.append(b)
        return np.array(cont, dtype=float).reshape(len(cont), len(self.amplitudes)), binary

    @property
    def n_levels(self) -> int:
        return int(np.prod([len(a) for a in self.amplitudes])) * len(self.binary_combinations)

    @property
    def size(self) -> int:
        return self.n_levels ** self.intervals

    def signal_ids(self) -> np.ndarray:
        total = self.size
        if self.sample is None or self.sample >= total:
            if total > self.budget:
                raise BudgetError(
                    f"{total} symbolic inputs exceed the budget of {self.budget}; "
                    "sample or coarsen the amplitude grid"
                )
            return np.arange(total, dtype=np.int64)
        rng = np.random.default_rng(self.sample_seed)
        ids = rng.choice(total, size=self.sample, replace=False)
        if self.include_constant:
            L = self.n_levels
            const = sum(L ** k for k in range(self.intervals)) * np.arange(L, dtype=np.int64)
            ids = np.concatenate([ids, const])
        ids = np.unique(ids.astype(np.int64))
        if ids.size > self.budget:
            raise BudgetError(f"{ids.size} sampled symbolic inputs exceed the budget of {self.budget}")
        return ids

    def decode(self, ids) -> np.ndarray:
        """Per-interval level indices, shape ``(S, intervals)``."""
        ids = np.asarray(ids, dtype=np.int64).copy()
        L = self.n_levels
        out = np.empty((ids.size, self.intervals), dtype=np.int64)
        for k in range(self.intervals - 1, -1, -1):
            out[:, k] = ids % L
            ids //= L
        return out

    def signal(self, input_id: int) -> PiecewiseConstantSignal:
        cont, binary = self.level_table()
        idx = self.decode([input_id])[0]
        return PiecewiseConstantSignal(self.interval_duration, cont[idx], [binary[i] for i in idx])

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "intervals": self.intervals,
            "amplitudes": self.amplitudes,
            "binary_combinations": [list(c) for c in self.binary_combinations],
            "budget": self.budget,
            "sample": self.sample,
            "sample_seed": self.sample_seed,
            "include_constant": self.include_constant,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SymbolicInputFamily":
        return cls(
            horizon=float(d["horizon"]),
            intervals=int(d["intervals"]),
            amplitudes=d["amplitudes"],
            binary_combinations=[tuple(c) for c in d.get("binary_combinations", [[]])],
            budget=int(d.get("budget", 100_000)),
            sample=d.get("sample"),
            sample_seed=int(d.get("sample_seed", 0)),
            include_constant=bool(d.get("include_constant", True)),
        )


def generate_symbolic_inputs(family: SymbolicInputFamily) -> list[PiecewiseConstantSignal]:
    cont, binary = family.level_table()
    idx = family.decode(family.signal_ids())
    dt = family.interval_duration
    return [PiecewiseConstantSignal(dt, cont[row], [binary[i] for i in row]) for row in idx]


@dataclass
class TransitionGraph:
    """Edge arrays of a (multi)graph over element indices."""

    n_nodes: int
    tail: np.ndarray
    head: np.ndarray
    input_id: np.ndarray
    endpoint: np.ndarray
    j1: np.ndarray
    j2: np.ndarray
    safe: np.ndarray

    @classmethod
    def empty(cls, n_nodes: int, n: int) -> "TransitionGraph":
        return cls(n_nodes, np.zeros(0, int), np.zeros(0, int), np.zeros(0, np.int64),
                   np.zeros((0, n)), np.zeros(0), np.zeros(0), np.zeros(0, bool))

    def __len__(self) -> int:
        return self.tail.size

    def subset(self, keep) -> "TransitionGraph":
        return TransitionGraph(self.n_nodes, self.tail[keep], self.head[keep], self.input_id[keep],
                               self.endpoint[keep], self.j1[keep], self.j2[keep], self.safe[keep])

    @classmethod
    def concat(cls, graphs: Sequence["TransitionGraph"]) -> "TransitionGraph":
        g0 = graphs[0]
        return cls(
            g0.n_nodes,
            np.concatenate([g.tail for g in graphs]),
            np.concatenate([g.head for g in graphs]),
            np.concatenate([g.input_id for g in graphs]),
            np.concatenate([g.endpoint for g in graphs]),
            np.concatenate([g.j1 for g in graphs]),
            np.concatenate([g.j2 for g in graphs]),
            np.concatenate([g.safe for g in graphs]),
        )

    def sorted(self) -> "TransitionGraph":
        order = np.lexsort((self.input_id, self.head, self.tail))
        return self.subset(order)


def build_transition_graph(partition: Partition, model: HybridSystemModel,
                           family: SymbolicInputFamily, Q1=None, p=2,
                           step: float | None = None, prune: bool = False,
                           chunk_rows: int = 250_000) -> TransitionGraph:
    """Simulate every (safe element, symbolic input) pair from the operating node.

    Trajectories leaving the domain or entering an unsafe element produce no
    edge.  With ``prune=True`` each chunk is reduced on the fly, which gives
    the same result as :func:`prune_multigraph` on the full multigraph.
    """
    n = model.n
    Q1 = np.eye(n) if Q1 is None else np.asarray(Q1, dtype=float)
    ids = family.signal_ids()
    cont, binary = family.level_table()
    combos = model.binary_combinations()
    code_of = {c: i for i, c in enumerate(combos)}
    try:
        level_codes = np.array([code_of[b] for b in binary], dtype=int)
    except KeyError as exc:
        raise ConfigurationError(f"binary level {exc} not a valid combination for the model") from None
    if np.any(cont < model.u_min - 1e-12) or np.any(cont > model.u_max + 1e-12):
        raise ConfigurationError("symbolic input amplitudes exceed the model's input bounds")
    lvl = family.decode(ids)
    S = ids.size
    sig_c = cont[lvl]  # (S, K, m)
    sig_b = level_codes[lvl]  # (S, K)

    unsafe = partition.unsafe_mask()
    nodes = partition.nodes()
    forbidden = (lambda X: unsafe[partition.locate_many(X)]) if unsafe.any() else None
    safe_elements = np.flatnonzero(~unsafe)
    per_chunk = max(1, chunk_rows // max(S, 1))
    parts = []
    skipped = 0
    for start in range(0, safe_elements.size, per_chunk):
        els = safe_elements[start:start + per_chunk]
        X0 = np.repeat(nodes[els], S, axis=0)
        res = integrate_batch(model, X0, np.tile(sig_c, (els.size, 1, 1)),
                              np.tile(sig_b, (els.size, 1)), family.interval_duration, step,
                              forbidden=forbidden)
        skipped += int(res.failed.sum())
        ok = res.valid
        tails = np.repeat(els, S)[ok]
        end = res.final[ok]
        heads = partition.locate_many(end)
        j1 = weighted_norm(end - nodes[heads], Q1, p)
        g = TransitionGraph(len(partition), tails, heads, np.tile(ids, els.size)[ok], end, j1,
                            np.zeros(tails.size), np.ones(tails.size, dtype=bool))
        parts.append(prune_multigraph(g) if prune else g)
    if skipped:
        log.warning("skipped %d symbolic inputs after integration failure", skipped)
    if not parts:
        return TransitionGraph.empty(len(partition), n)
    return TransitionGraph.concat(parts)


def prune_multigraph(tg: TransitionGraph) -> TransitionGraph:
    """Keep one edge per ordered (tail, head): least ``j1``, then lowest input id."""
    if len(tg) == 0:
        return tg
    order = np.lexsort((tg.input_id, tg.j1, tg.head, tg.tail))
    t, h = tg.tail[order], tg.head[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = (t[1:] != t[:-1]) | (h[1:] != h[:-1])
    return tg.subset(order[first])


def input_effort(family: SymbolicInputFamily, input_ids, R, p=2) -> np.ndarray:
    """Sum over intervals of ``||u_k||_R^p`` for each signal."""
    cont, _ = family.level_table()
    lvl = family.decode(input_ids)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    total = np.zeros(lvl.shape[0])
    for k in range(lvl.shape[1]):
        total += weighted_norm(cont[lvl[:, k]], R, p)
    return total


def weigh_edges(tg: TransitionGraph, partition: Partition, family: SymbolicInputFamily,
                des, Q2=None, R=None, p=2, edge_weight: str = "goal_distance") -> TransitionGraph:
    """Set ``j2 = ||o_head - des||_Q2^p + sum_k ||u_k||_R^p`` and drop unsafe edges.

    ``edge_weight="transition_length"`` replaces the head-to-goal term with the
    tail-to-head node distance.
    """
    n = partition.n
    des = np.asarray(des, dtype=float)
    if not partition.in_domain(des)[0]:
        raise ConfigurationError(f"destination {des} outside the domain")
    Q2 = np.eye(n) if Q2 is None else np.asarray(Q2, dtype=float)
    unsafe = partition.unsafe_mask()
    keep = ~(unsafe[tg.tail] | unsafe[tg.head])
    out = tg.subset(keep)
    nodes = partition.nodes()
    if edge_weight == "goal_distance":
        state_term = weighted_norm(nodes[out.head] - des, Q2, p)
    elif edge_weight == "transition_length":
        state_term = weighted_norm(nodes[out.head] - nodes[out.tail], Q2, p)
    else:
        raise ConfigurationError(f"unknown edge weight {edge_weight!r}")
    effort = np.zeros(len(out)) if R is None else input_effort(family, out.input_id, R, p)
    out.j2 = state_term + effort
    out.safe = np.ones(len(out), dtype=bool)
    return out


@dataclass
class ReachabilitySector:
    destination: int
    next_hop: dict[int, tuple[int, int]]
    cost_to_go: dict[int, float]

    def post(self, q: int) -> int | None:
        hop = self.next_hop.get(q)
        return None if hop is None else hop[0]

    def path(self, q: int, max_hops: int | None = None) -> list[int]:
        out = [q]
        limit = max_hops if max_hops is not None else len(self.next_hop) + 1
        while q != self.destination:
            if q not in self.next_hop or len(out) > limit:
                break
            q = self.next_hop[q][0]
            out.append(q)
        return out

    def to_dict(self) -> dict:
        return {
            "destination": self.destination,
            "next_hop": {str(k): [int(v[0]), int(v[1])] for k, v in sorted(self.next_hop.items())},
            "cost_to_go": {str(k): float(v) for k, v in sorted(self.cost_to_go.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReachabilitySector":
        return cls(
            int(d["destination"]),
            {int(k): (int(v[0]), int(v[1])) for k, v in d["next_hop"].items()},
            {int(k): float(v) for k, v in d["cost_to_go"].items()},
        )


def dijkstra_rs(tg: TransitionGraph, partition: Partition, des) -> ReachabilitySector:
    """Shortest paths from every element to the element holding ``des``.

    One run from the destination over reversed edges; self-loops are ignored
    and ties keep the first edge in (tail, head, input id) order.
    """
    des = np.asarray(des, dtype=float)
    dest = partition.locate(des) if des.ndim else int(des)
    return dijkstra_to(tg, dest, partition.unsafe_mask())


def dijkstra_to(tg: TransitionGraph, dest: int, unsafe=None) -> ReachabilitySector:
    if unsafe is not None and unsafe[dest]:
        raise ConfigurationError(f"destination element {dest} is flagged unsafe")
    g = tg.sorted()
    incoming: dict[int, list[tuple[int, float, int]]] = {}
    for s, h, w, uid in zip(g.tail.tolist(), g.head.tolist(), g.j2.tolist(), g.input_id.tolist()):
        if s == h:
            continue
        if w < 0:
            raise ConfigurationError("negative edge weight")
        incoming.setdefault(h, []).append((s, w, uid))
    dist = {dest: 0.0}
    hop: dict[int, tuple[int, int]] = {}
    done = set()
    heap = [(0.0, dest)]
    while heap:
        d, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        for s, w, uid in incoming.get(v, ()):
            if s in done:
                continue
            nd = d + w
            if nd < dist.get(s, np.inf):
                dist[s] = nd
                hop[s] = (v, uid)
                heapq.heappush(heap, (nd, s))
    return ReachabilitySector(dest, hop, dist)


def check_reachability(rs: ReachabilitySector, partition: Partition, init) -> bool:
    q = partition.locate(init)
    return q == rs.destination or q in rs.next_hop
