import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavgraph.graph import (
    NetworkGraph,
    Node,
    NodeKind,
    ScenarioConfig,
    ScenarioError,
    build_scenario,
    pairwise_distances,
    random_instances,
)


def test_default_scenario_has_six_monitors_start_and_charge(seed42):
    kinds = [n.kind for n in seed42.nodes]
    assert kinds.count(NodeKind.MONITOR) == 6
    assert kinds.count(NodeKind.START) == 1
    assert kinds.count(NodeKind.CHARGE) == 1
    assert seed42.operator_id is None
    assert all(n.task_size == 10.0 for n in seed42.nodes if n.kind is NodeKind.MONITOR)


def test_charge_station_defaults_to_area_centre(seed42):
    assert seed42.nodes[seed42.charge_id].position == (200.0, 200.0)


def test_same_config_gives_identical_graph():
    a = build_scenario(ScenarioConfig(seed=42))
    b = build_scenario(ScenarioConfig(seed=42))
    assert a == b
    assert a.distances.tobytes() == b.distances.tobytes()


def test_duplicate_position_rejected():
    cfg = ScenarioConfig(n_points=1, start_position=(0, 0), monitor_positions=((0, 0.0001),))
    with pytest.raises(ScenarioError, match="duplicate position"):
        build_scenario(cfg)


def test_three_four_five():
    g = build_scenario(ScenarioConfig(n_points=1, start_position=(0, 0), monitor_positions=((3, 4),)))
    assert g.distance(0, 1) == pytest.approx(5.0)


def test_distance_matrix_matches_hand_recomputation(seed42):
    d = pairwise_distances(seed42)
    for a in seed42.nodes:
        for b in seed42.nodes:
            ax, ay = a.position
            bx, by = b.position
            assert d[a.id, b.id] == pytest.approx(math.sqrt((ax - bx) ** 2 + (ay - by) ** 2), abs=1e-12)
    assert np.array_equal(d, d.T)


def test_distances_are_read_only(seed42):
    with pytest.raises(ValueError):
        seed42.distances[0, 1] = 1.0


def test_positions_quantised_to_centimetres(seed42):
    for n in seed42.nodes:
        for v in n.position:
            assert round(v, 2) == v


def test_task_size_only_on_monitors():
    with pytest.raises(ScenarioError):
        NetworkGraph(
            (
                Node(0, NodeKind.START, (0.0, 0.0), 5.0),
                Node(1, NodeKind.MONITOR, (1.0, 1.0), 1.0),
                Node(2, NodeKind.CHARGE, (2.0, 2.0)),
            ),
            (10.0, 10.0),
        )


def test_position_outside_area_rejected():
    with pytest.raises(ScenarioError):
        NetworkGraph(
            (
                Node(0, NodeKind.START, (0.0, 0.0)),
                Node(1, NodeKind.MONITOR, (11.0, 1.0), 1.0),
                Node(2, NodeKind.CHARGE, (2.0, 2.0)),
            ),
            (10.0, 10.0),
        )


def test_operator_is_metadata_only():
    g = build_scenario(ScenarioConfig(operator_position=(10, 10)))
    assert g.operator_id == 8
    assert 8 not in g.monitor_ids


def test_random_instances_are_seeded():
    a = random_instances(5, ScenarioConfig(), task_range=(5, 35), seed=3)
    b = random_instances(5, ScenarioConfig(), task_range=(5, 35), seed=3)
    assert a == b
    assert len({g.nodes[1].position for g in a}) == 5


def test_config_dict_round_trip():
    cfg = ScenarioConfig(n_points=3, task_sizes_mb=(1.0, 2.0, 3.0), operator_position=(5.0, 5.0))
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 9))
def test_triangle_inequality_and_symmetry(seed, n):
    g = build_scenario(ScenarioConfig(n_points=n, seed=seed))
    d = g.distances
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0)
    assert np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :] + 1e-9)
