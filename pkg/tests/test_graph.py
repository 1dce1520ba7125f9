import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chc.dynamics import HybridSystemModel, ModeDynamics
from chc.errors import BudgetError, ConfigurationError
from chc.graph import (
    SymbolicInputFamily,
    TransitionGraph,
    build_transition_graph,
    check_reachability,
    dijkstra_rs,
    dijkstra_to,
    generate_symbolic_inputs,
    input_effort,
    prune_multigraph,
    weigh_edges,
    weighted_norm,
)
from chc.partition import attach_local_models, build_partition
from chc.synthesis import SynthesisOptions, synthesize

from conftest import integrator_model
from oracles import bellman_ford, group_by_min


def edge_graph(n_nodes, edges, j1=None):
    """Graph from ``(tail, head, weight)`` triples; weights go to ``j2``."""
    t = np.array([e[0] for e in edges], dtype=np.int64)
    h = np.array([e[1] for e in edges], dtype=np.int64)
    w = np.array([e[2] for e in edges], dtype=float)
    k = len(edges)
    return TransitionGraph(n_nodes, t, h, np.arange(k, dtype=np.int64), np.zeros((k, 1)),
                           np.zeros(k) if j1 is None else np.asarray(j1, float), w, np.ones(k, bool))


def random_graph(rng, n_nodes, density=0.08, max_w=9):
    edges = []
    for s in range(n_nodes):
        for h in range(n_nodes):
            if s != h and rng.uniform() < density:
                edges.append((s, h, int(rng.integers(1, max_w + 1))))
    return edges


@pytest.fixture(scope="module")
def small_synthesis(pendulum):
    fam = SymbolicInputFamily(0.2, 2, [[-0.9, 0.0, 0.9]])
    opts = SynthesisOptions((8, 8), np.eye(2), np.eye(2), 1e-6 * np.eye(1), t_fs_max=0.04)
    return synthesize(pendulum, fam, opts, [np.pi, 0.0]), fam


# -------------------------------------------------------------------- family

def test_family_sizes():
    assert SymbolicInputFamily(1.0, 2, [[-1.0, 1.0]]).size == 4
    assert len(generate_symbolic_inputs(SymbolicInputFamily(1.0, 2, [[-1.0, 1.0]]))) == 4
    amps = np.round(np.arange(-0.9, 0.91, 0.15), 10).tolist()
    assert SymbolicInputFamily(0.04, 4, [amps]).size == 28_561


def test_signal_layout():
    fam = SymbolicInputFamily(1.0, 2, [[-1.0, 1.0]])
    sigs = generate_symbolic_inputs(fam)
    assert all(s.interval_duration == 0.5 and s.continuous.shape == (2, 1) for s in sigs)
    np.testing.assert_array_equal(fam.signal(2).continuous, [[1.0], [-1.0]])


def test_binary_levels_enumerated():
    fam = SymbolicInputFamily(40.0, 1, [[0.0], [0.0]], [(1, 1), (1, 0), (0, 1), (0, 0)])
    sigs = generate_symbolic_inputs(fam)
    assert sorted(s.binary[0] for s in sigs) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_budget_exceeded():
    fam = SymbolicInputFamily(1.0, 4, [list(range(13))], budget=10_000)
    with pytest.raises(BudgetError):
        fam.signal_ids()


def test_sampling_keeps_ids_stable():
    full = SymbolicInputFamily(1.0, 3, [[0, 1, 2]])
    part = SymbolicInputFamily(1.0, 3, [[0, 1, 2]], sample=5, sample_seed=4)
    ids = part.signal_ids()
    assert ids.size <= 5 + 3 and set(ids.tolist()) >= {0, 13, 26}
    for i in ids:
        np.testing.assert_array_equal(part.signal(int(i)).continuous, full.signal(int(i)).continuous)


def test_family_round_trip():
    fam = SymbolicInputFamily(40.0, 2, [[0, 1e-5], [0, 2e-5]], [(0, 1), (1, 1)], sample=3)
    assert SymbolicInputFamily.from_dict(json.loads(json.dumps(fam.to_dict()))) == fam


# -------------------------------------------------------------- construction

def test_static_system_self_loops():
    mode = ModeDynamics.affine(np.zeros((2, 2)), [0.0, 0.0], np.zeros((2, 1)))
    model = HybridSystemModel(np.array([[0, 1], [0, 1]], float), np.array([[-1.0, 1.0]]), (mode,), {(): 0})
    part = build_partition(model.state_bounds, (3, 3))
    tg = build_transition_graph(part, model, SymbolicInputFamily(1.0, 1, [[-1.0, 1.0]]))
    assert len(tg) == 9 * 2
    np.testing.assert_array_equal(tg.tail, tg.head)
    np.testing.assert_array_equal(tg.j1, 0.0)


def test_integrator_neighbours():
    # nodes 0.25 and 0.75; x(t) = x0 + u t over 0.5 s moves exactly one cell
    model = integrator_model()
    part = build_partition(model.state_bounds, (2,))
    tg = build_transition_graph(part, model, SymbolicInputFamily(0.5, 1, [[-1.0, 1.0]]))
    got = sorted(zip(tg.tail.tolist(), tg.head.tolist(), tg.input_id.tolist()))
    assert got == [(0, 1, 1), (1, 0, 0)]
    np.testing.assert_allclose(tg.j1, 0.0, atol=1e-24)


def test_amplitudes_outside_bounds_rejected():
    model = integrator_model()
    part = build_partition(model.state_bounds, (2,))
    with pytest.raises(ConfigurationError):
        build_transition_graph(part, model, SymbolicInputFamily(0.5, 1, [[-2.0, 1.0]]))


def test_endpoints_in_heads(small_synthesis):
    syn, _ = small_synthesis
    tg = syn.graph
    assert len(tg) > 0
    np.testing.assert_array_equal(syn.partition.locate_many(tg.endpoint), tg.head)
    assert np.all(tg.j1 >= 0) and np.all(tg.j2 >= 0)


def test_streaming_prune_matches_full(pendulum):
    fam = SymbolicInputFamily(0.2, 2, [[-0.9, 0.0, 0.9]])
    part = build_partition(pendulum.state_bounds, (6, 6))
    attach_local_models(part, pendulum)
    full = prune_multigraph(build_transition_graph(part, pendulum, fam))
    streamed = prune_multigraph(build_transition_graph(part, pendulum, fam, prune=True, chunk_rows=40))
    for a, b in zip((full.tail, full.head, full.input_id, full.j1), (streamed.tail, streamed.head,
                                                                      streamed.input_id, streamed.j1)):
        np.testing.assert_array_equal(a, b)


# ------------------------------------------------------------------- pruning

def test_prune_keeps_smaller_j1():
    g = prune_multigraph(edge_graph(2, [(0, 1, 0.0), (0, 1, 0.0)], j1=[0.3, 0.1]))
    assert len(g) == 1 and g.j1[0] == 0.1 and g.input_id[0] == 1


def test_prune_tie_lowest_id():
    g = prune_multigraph(edge_graph(2, [(0, 1, 0.0), (0, 1, 0.0)], j1=[0.2, 0.2]))
    assert len(g) == 1 and g.input_id[0] == 0


@given(st.integers(0, 10_000))
def test_prune_matches_group_by_min(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 80))
    t = rng.integers(0, 6, k)
    h = rng.integers(0, 6, k)
    j1 = rng.integers(0, 4, k) / 4.0  # coarse values force ties
    ids = rng.permutation(k)
    g = TransitionGraph(6, t, h, ids, np.zeros((k, 1)), j1, np.zeros(k), np.ones(k, bool))
    pruned = prune_multigraph(g)
    got = {(int(a), int(b)): (float(c), int(d)) for a, b, c, d in
           zip(pruned.tail, pruned.head, pruned.j1, pruned.input_id)}
    assert got == group_by_min(zip(t.tolist(), h.tolist(), j1.tolist(), ids.tolist()))
    assert len(got) == len(pruned)


# ------------------------------------------------------------------- weights

def test_weighted_norm_orders():
    X = np.array([[3.0, -4.0]])
    assert weighted_norm(X, np.eye(2), 2)[0] == 25.0
    assert weighted_norm(X, np.eye(2), 1)[0] == 7.0
    assert weighted_norm(X, np.eye(2), np.inf)[0] == 4.0
    assert weighted_norm(X, 2 * np.eye(2), 2)[0] == 50.0


def test_destination_head_has_zero_weight():
    model = integrator_model()
    part = build_partition(model.state_bounds, (2,))
    fam = SymbolicInputFamily(0.5, 1, [[-1.0, 1.0]])
    tg = weigh_edges(build_transition_graph(part, model, fam), part, fam, [0.75])
    into = tg.head == 1
    np.testing.assert_array_equal(tg.j2[into], 0.0)
    np.testing.assert_allclose(tg.j2[~into], 0.25, rtol=1e-15)


def test_small_effort_weight(small_synthesis):
    syn, fam = small_synthesis
    nodes = syn.partition.nodes()
    dist2 = np.sum((nodes[syn.graph.head] - np.array([np.pi, 0.0])) ** 2, axis=1)
    np.testing.assert_allclose(syn.graph.j2, dist2, rtol=0, atol=2 * 0.81e-6 + 1e-12)
    effort = input_effort(fam, syn.graph.input_id, 1e-6 * np.eye(1))
    np.testing.assert_allclose(syn.graph.j2, dist2 + effort, rtol=1e-12)


def test_scaling_q2_keeps_next_hops(small_synthesis):
    syn, fam = small_synthesis
    base = weigh_edges(syn.graph, syn.partition, fam, [np.pi, 0.0], np.eye(2), None, p=1)
    twice = weigh_edges(syn.graph, syn.partition, fam, [np.pi, 0.0], 2 * np.eye(2), None, p=1)
    np.testing.assert_allclose(twice.j2, 2 * base.j2, rtol=1e-15)
    a = dijkstra_rs(base, syn.partition, [np.pi, 0.0])
    b = dijkstra_rs(twice, syn.partition, [np.pi, 0.0])
    assert a.next_hop == b.next_hop


def test_destination_outside_domain():
    model = integrator_model()
    part = build_partition(model.state_bounds, (2,))
    fam = SymbolicInputFamily(0.5, 1, [[-1.0, 1.0]])
    with pytest.raises(ConfigurationError):
        weigh_edges(build_transition_graph(part, model, fam), part, fam, [2.0])


# ------------------------------------------------------------------ dijkstra

def test_line_graph_prefers_two_hops():
    rs = dijkstra_to(edge_graph(3, [(0, 1, 1), (1, 2, 1), (0, 2, 3)]), 2)
    assert rs.path(0) == [0, 1, 2]
    assert rs.cost_to_go[0] == 2.0
    assert rs.cost_to_go[2] == 0.0 and 2 not in rs.next_hop


def test_unsafe_destination():
    with pytest.raises(ConfigurationError):
        dijkstra_to(edge_graph(2, [(0, 1, 1)]), 1, np.array([False, True]))


def test_self_loops_ignored():
    rs = dijkstra_to(edge_graph(2, [(0, 0, 0), (1, 1, 0)]), 1)
    assert rs.next_hop == {}


@given(st.integers(0, 10_000), st.integers(2, 50))
def test_distances_match_bellman_ford(seed, n_nodes):
    rng = np.random.default_rng(seed)
    edges = random_graph(rng, n_nodes)
    dest = int(rng.integers(n_nodes))
    rs = dijkstra_to(edge_graph(n_nodes, edges), dest)
    ref = bellman_ford(n_nodes, edges, dest)
    for q in range(n_nodes):
        assert rs.cost_to_go.get(q, np.inf) == ref[q]
        assert (q in rs.next_hop) == (np.isfinite(ref[q]) and q != dest)


@given(st.integers(0, 10_000))
def test_triangle_property(seed):
    rng = np.random.default_rng(seed)
    edges = random_graph(rng, 30, 0.1)
    rs = dijkstra_to(edge_graph(30, edges), 0)
    for s, h, w in edges:
        if h in rs.cost_to_go:
            assert rs.cost_to_go[s] <= w + rs.cost_to_go[h]
    for s, (h, uid) in rs.next_hop.items():
        assert rs.cost_to_go[s] == edges[uid][2] + rs.cost_to_go[h]
        assert len(rs.path(s)) <= 30 and rs.path(s)[-1] == 0


def test_unsafe_elements_avoided(pendulum, small_synthesis):
    syn, fam = small_synthesis
    part = syn.partition
    dest = part.locate([np.pi, 0.0])
    blocked = [q for q in range(len(part)) if q != dest and syn.rs.post(q) is not None][:5]
    for q in blocked:
        part[q].unsafe = True
    try:
        tg = weigh_edges(build_transition_graph(part, pendulum, fam), part, fam, [np.pi, 0.0],
                         R=1e-6 * np.eye(1))
        rs = dijkstra_rs(tg, part, [np.pi, 0.0])
        for q in rs.next_hop:
            assert not set(rs.path(q)) & set(blocked)
    finally:
        for q in blocked:
            part[q].unsafe = False


# -------------------------------------------------------------- reachability

def test_check_reachability_cases():
    part = build_partition([[0.0, 3.0]], [3])
    rs = dijkstra_to(edge_graph(3, [(0, 1, 1)]), 1)
    assert check_reachability(rs, part, [1.5])
    assert check_reachability(rs, part, [0.5])
    assert not check_reachability(rs, part, [2.5])


def test_rs_deterministic(pendulum, small_synthesis):
    syn, fam = small_synthesis
    again = synthesize(pendulum, fam, SynthesisOptions((8, 8), np.eye(2), np.eye(2), 1e-6 * np.eye(1),
                                                       t_fs_max=0.04), [np.pi, 0.0])
    assert json.dumps(again.rs.to_dict(), sort_keys=True) == json.dumps(syn.rs.to_dict(), sort_keys=True)
