import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chc.dynamics import HybridSystemModel, ModeDynamics
from chc.errors import ConfigurationError, DomainViolationError, ScenarioParseError
from chc.partition import (
    attach_local_models,
    build_partition,
    candidate_nodes,
    downstream_mask,
    element_fs_solver,
    load_partition,
    partition_from_dict,
    partition_to_dict,
    place_operating_node,
    place_operating_nodes,
    save_partition,
    unactuated_directions,
)

from conftest import drift_model
from oracles import linear_scan_locate


def boxes(part):
    return [(el.lower, el.upper) for el in part.elements]


def fully_actuated_2d():
    mode = ModeDynamics.affine(np.zeros((2, 2)), [0.0, 0.0], np.eye(2))
    return HybridSystemModel(np.array([[0.0, 1.0], [0.0, 1.0]]), np.array([[-1.0, 1.0]] * 2), (mode,), {(): 0})


@pytest.fixture(scope="module")
def pendulum_part(pendulum):
    part = build_partition(pendulum.state_bounds, (8, 8))
    attach_local_models(part, pendulum)
    return part


# ------------------------------------------------------------------ building

def test_uniform_split():
    part = build_partition([[0.0, 1.0]], [4])
    lows = [el.lower[0] for el in part.elements]
    highs = [el.upper[0] for el in part.elements]
    np.testing.assert_allclose(lows, [0, 0.25, 0.5, 0.75], atol=1e-15)
    np.testing.assert_allclose(highs, [0.25, 0.5, 0.75, 1.0], atol=1e-15)


def test_element_counts(pendulum, tank):
    assert len(build_partition(pendulum.state_bounds, (40, 32))) == 1280
    assert len(build_partition(tank.state_bounds, (10, 10, 20))) == 2000


def test_nodes_start_at_centers():
    part = build_partition([[0, 1], [0, 2]], [3, 2])
    for el in part.elements:
        np.testing.assert_array_equal(el.operating_node, el.center)
        assert np.all(el.lower < el.upper)


@pytest.mark.parametrize("seed", [[0], [-2], [3, 1]])
def test_bad_seed(seed):
    with pytest.raises(ConfigurationError):
        build_partition([[0.0, 1.0]], seed)


def test_bad_domain():
    with pytest.raises(ConfigurationError):
        build_partition([[0.0, np.inf]], [2])


# ------------------------------------------------------------------ locating

def test_locate_lower_corner_and_center():
    part = build_partition([[0, 1], [-1, 1]], [3, 4])
    assert part.locate([0.0, -1.0]) == 0
    assert part.locate(part[7].center) == 7


def test_locate_upper_faces_closed():
    part = build_partition([[0, 1], [-1, 1]], [3, 4])
    assert part.locate([1.0, 1.0]) == len(part) - 1


def test_locate_shared_face_goes_up():
    part = build_partition([[0.0, 1.0]], [4])
    assert part.locate([0.25]) == 1


def test_locate_outside_raises():
    part = build_partition([[0.0, 1.0]], [4])
    with pytest.raises(DomainViolationError):
        part.locate([1.0 + 1e-9])


@given(st.lists(st.integers(1, 6), min_size=1, max_size=3), st.integers(0, 10_000))
def test_locate_matches_linear_scan(seed, rs):
    rng = np.random.default_rng(rs)
    lo = rng.uniform(-2, 0, len(seed))
    domain = np.column_stack([lo, lo + rng.uniform(0.5, 3, len(seed))])
    part = build_partition(domain, seed)
    X = rng.uniform(domain[:, 0], domain[:, 1], (20, len(seed)))
    # include grid points, where the boundary rule matters
    X[:5] = np.array([[rng.choice(e) for e in part.edges] for _ in range(5)])
    for x in X:
        assert part.locate(x) == linear_scan_locate(boxes(part), x)


# ------------------------------------------------------- unactuated directions

def test_pendulum_direction_sign(pendulum):
    from chc.dynamics import affine_approximation

    a, B = affine_approximation(pendulum, [1.0, 2.0])
    (n,) = unactuated_directions(B, a)
    np.testing.assert_allclose(n, [1.0, 0.0], atol=1e-15)
    a, B = affine_approximation(pendulum, [1.0, -2.0])
    (n,) = unactuated_directions(B, a)
    np.testing.assert_allclose(n, [-1.0, 0.0], atol=1e-15)


def test_full_rank_has_no_directions():
    assert unactuated_directions(np.eye(3), np.ones(3)) == []


@given(st.integers(0, 10_000))
def test_directions_orthonormal_and_oriented(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    m = int(rng.integers(0, n + 1))
    B = rng.normal(size=(n, m)) if m else np.zeros((n, 1))
    a = rng.normal(size=n)
    dirs = unactuated_directions(B, a)
    assert len(dirs) == n - np.linalg.matrix_rank(B)
    for d in dirs:
        assert np.linalg.norm(B.T @ d) <= 1e-10
        assert float(d @ a) >= 0.0
    if dirs:
        D = np.array(dirs)
        np.testing.assert_allclose(D @ D.T, np.eye(len(dirs)), atol=1e-10)


def test_pendulum_elements_oriented(pendulum_part):
    for el in pendulum_part.elements:
        a, B = el.affine[()]
        for d in el.unactuated[()]:
            assert float(d @ a) >= 0.0
            assert np.linalg.norm(B.T @ d) <= 1e-10


# ----------------------------------------------------------------- placement

def test_candidates_center_first():
    part = build_partition([[0, 1], [0, 1]], [1, 1])
    c = candidate_nodes(part[0])
    assert c.shape == (5, 2)
    np.testing.assert_array_equal(c[0], [0.5, 0.5])
    inset = candidate_nodes(part[0], inset=0.2)
    assert np.all(inset[1:] > 0) and np.all(inset[1:] < 1)


def test_fully_actuated_prefers_center():
    model = fully_actuated_2d()
    part = build_partition(model.state_bounds, (2, 2))
    attach_local_models(part, model)
    place_operating_nodes(part, model, t_fs_max=10.0, probes="corners", inset=0.0)
    for el in part.elements:
        np.testing.assert_array_equal(el.operating_node, el.center)


def test_drift_only_element_picks_downstream_corner():
    model = drift_model(1.0)
    part = build_partition(model.state_bounds, (1,))
    attach_local_models(part, model)
    place_operating_nodes(part, model, t_fs_max=1.0, probes="center", inset=0.0)
    np.testing.assert_array_equal(part[0].operating_node, [1.0])


def test_drift_only_unfiltered_tie_goes_to_center():
    # from 0.5, both 0.5 (t = 0) and 1 (t = 0.5) are hit exactly; 0 is not
    model = drift_model(1.0)
    part = build_partition(model.state_bounds, (1,))
    attach_local_models(part, model)
    el = part[0]
    solver = element_fs_solver(el, model.u_min, model.u_max, 1.0)
    assert solver(np.array([0.5]), np.array([0.0])) == pytest.approx(0.5)
    assert solver(np.array([0.5]), np.array([1.0])) == pytest.approx(0.0, abs=1e-12)
    cands = np.array([[0.5], [0.0], [1.0]])
    np.testing.assert_array_equal(place_operating_node(el, cands, [[0.5]], solver), [0.5])
    mask = downstream_mask(el, cands)
    np.testing.assert_array_equal(mask, [False, False, True])


def test_all_infeasible_marks_unsafe():
    part = build_partition([[0.0, 1.0]], [1])
    node = place_operating_node(part[0], [[0.5], [1.0]], [[0.5]], lambda x, o: np.inf)
    assert part[0].unsafe
    np.testing.assert_array_equal(node, [0.5])


def test_pendulum_nodes_lean_with_flow(pendulum, pendulum_part):
    place_operating_nodes(pendulum_part, pendulum, t_fs_max=0.04)
    for el in pendulum_part.elements:
        assert el.contains(el.operating_node)
        sign = math.copysign(1.0, el.center[1])
        assert sign * (el.operating_node[0] - el.center[0]) > 0


# ------------------------------------------------------------- properties

def test_coverage_and_disjointness():
    part = build_partition([[0, 2 * math.pi], [-10, 10]], (12, 9))
    rng = np.random.default_rng(0)
    X = rng.uniform([0, -10], [2 * math.pi, 10], (10_000, 2))
    for x, q in zip(X, part.locate_many(X)):
        assert part[q].contains(x)
    for i, a in enumerate(part.elements):
        for b in part.elements[i + 1:]:
            overlap = np.minimum(a.upper, b.upper) - np.maximum(a.lower, b.lower)
            assert np.any(overlap <= 0)


def test_round_trip_bit_exact(tmp_path, pendulum, pendulum_part):
    place_operating_nodes(pendulum_part, pendulum, t_fs_max=0.04)
    path = tmp_path / "part.json"
    save_partition(pendulum_part, path)
    back = load_partition(path)
    assert partition_to_dict(back) == partition_to_dict(pendulum_part)
    for a, b in zip(back.elements, pendulum_part.elements):
        assert a.operating_node.tobytes() == b.operating_node.tobytes()


def test_malformed_record():
    d = partition_to_dict(build_partition([[0, 1]], [2]))
    d["elements"].pop()
    with pytest.raises(ScenarioParseError):
        partition_from_dict(d)
    with pytest.raises(ScenarioParseError):
        partition_from_dict({"domain": [[0, 1]]})
