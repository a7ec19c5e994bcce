import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import (
    SEED42_OPTIMAL_CHARGE_AFTER,
    SEED42_OPTIMAL_CONSUMPTION_J,
    SEED42_OPTIMAL_ORDER,
    brute_force_costs,
    remaining_of,
)
from uavgraph.energy import EnergyModelConfig
from uavgraph.graph import NetworkGraph, Node, NodeKind, ScenarioConfig, build_scenario
from uavgraph.routing import (
    BEFORE_FIRST_VISIT,
    Route,
    RouteError,
    best_charge_insertion,
    exhaustive_optimal,
    exhaustive_search,
    heuristic_route,
    nearest_neighbor_order,
    route_cost,
    route_length,
    two_opt_improve,
)


def _graph(start, monitors, charge, area=(10.0, 10.0), task=1.0):
    nodes = [Node(0, NodeKind.START, start)]
    nodes += [Node(i + 1, NodeKind.MONITOR, p, task) for i, p in enumerate(monitors)]
    nodes.append(Node(len(monitors) + 1, NodeKind.CHARGE, charge))
    return NetworkGraph(tuple(nodes), area)


def test_out_and_back_length():
    g = _graph((0.0, 0.0), [(3.0, 4.0)], (0.0, 0.0))
    assert route_length(Route((1,), BEFORE_FIRST_VISIT), g) == pytest.approx(10.0)


def test_reversal_keeps_length(seed42):
    r = Route((2, 4, 6, 1, 3, 5), 2)
    assert r.reversed() == Route((5, 3, 1, 6, 4, 2), 2)
    assert route_length(r.reversed(), seed42) == pytest.approx(route_length(r, seed42))
    assert Route((1, 2, 3, 4, 5, 6), BEFORE_FIRST_VISIT).reversed().charge_after == 5


def test_heuristic_route_length_matches_hand_sum(seed42, energy):
    r = heuristic_route(seed42, energy)
    stops = r.stops(seed42)
    pos = [seed42.nodes[s].position for s in stops]
    hand = sum(math.hypot(a[0] - b[0], a[1] - b[1]) for a, b in zip(pos, pos[1:]))
    assert route_length(r, seed42) == pytest.approx(hand, abs=1e-9)


def test_route_validation():
    g = _graph((0.0, 0.0), [(1.0, 1.0), (2.0, 2.0)], (5.0, 5.0))
    with pytest.raises(RouteError):
        Route((1, 1), 0).validate(g)
    with pytest.raises(RouteError):
        Route((1, 2), 2).validate(g)
    with pytest.raises(RouteError):
        Route((1, 2), -2).validate(g)


def test_single_monitor_is_trivially_optimal(energy):
    g = _graph((0.0, 0.0), [(3.0, 4.0)], (0.0, 0.0))
    res = exhaustive_search(g, energy)
    assert res.route.visit_order == (1,)
    assert res.evaluated == 2


def test_seed42_oracle_matches_independent_enumeration(seed42, energy):
    res = exhaustive_search(seed42, energy)
    assert res.evaluated == 720 * 7
    assert res.cost.consumption == pytest.approx(SEED42_OPTIMAL_CONSUMPTION_J, abs=1e-6)
    assert res.route == Route(SEED42_OPTIMAL_ORDER, SEED42_OPTIMAL_CHARGE_AFTER)
    every = brute_force_costs(seed42, energy)
    assert len(every) == 5040
    assert all(res.cost.consumption <= pre + post + 1e-9 for _, _, pre, post in every)


def test_oracle_prefers_feasible_then_smallest_deficit(seed42, energy):
    tight = energy.with_capacity(13600.0)
    res = exhaustive_search(seed42, tight)
    every = brute_force_costs(seed42, tight)
    rem = [remaining_of(pre, post, 13600.0) for _, _, pre, post in every]
    feasible = [pre + post for (_, _, pre, post), r in zip(every, rem) if r >= 0]
    assert feasible
    assert res.cost.feasible
    assert res.cost.consumption == pytest.approx(min(feasible), abs=1e-6)
    tiny = energy.with_capacity(100.0)
    res = exhaustive_search(seed42, tiny)
    deficits = [max(0.0, -remaining_of(pre, post, 100.0)) for _, _, pre, post in brute_force_costs(seed42, tiny)]
    assert not res.cost.feasible
    assert res.cost.deficit == pytest.approx(min(deficits), abs=1e-6)


def test_exhaustive_refuses_large_n(energy):
    g = build_scenario(ScenarioConfig(n_points=10))
    with pytest.raises(RouteError, match="N <= 9"):
        exhaustive_optimal(g, energy)


def test_two_opt_fixed_point_on_optimal_route(energy):
    g = build_scenario(ScenarioConfig(n_points=3, seed=5))
    best = exhaustive_optimal(g, energy)
    assert two_opt_improve(best, g, energy) == best


def test_two_opt_uncrosses_quadrilateral(energy):
    # square corners visited in crossing order 1 -> 3 -> 2 -> 4
    g = _graph((0.0, 5.0), [(2.0, 2.0), (8.0, 2.0), (8.0, 8.0), (2.0, 8.0)], (0.0, 5.0))
    crossed = Route((1, 3, 2, 4), BEFORE_FIRST_VISIT)
    improved = two_opt_improve(crossed, g, energy)
    assert route_length(improved, g) < route_length(crossed, g) - 1e-9


def test_two_opt_near_oracle_on_seed42(seed42, energy):
    start = best_charge_insertion(nearest_neighbor_order(seed42), seed42, energy)
    improved = two_opt_improve(start, seed42, energy)
    assert route_cost(improved, seed42, energy).consumption <= 1.05 * SEED42_OPTIMAL_CONSUMPTION_J


def test_zero_detour_charge_is_weakly_optimal(energy):
    g = _graph((1.0, 1.0), [(3.0, 4.0), (7.0, 2.0), (5.0, 8.0)], (1.0, 1.0))
    order = (1, 3, 2)
    r = best_charge_insertion(order, g, energy)
    here = route_cost(r, g, energy).consumption
    before = route_cost(Route(order, BEFORE_FIRST_VISIT), g, energy).consumption
    assert before == pytest.approx(here)


def test_insertion_with_tiny_battery_picks_smallest_deficit(seed42, energy):
    tiny = energy.with_capacity(50.0)
    order = (1, 2, 3, 4, 5, 6)
    r = best_charge_insertion(order, seed42, tiny)
    costs = [route_cost(Route(order, k), seed42, tiny) for k in range(-1, 6)]
    assert not route_cost(r, seed42, tiny).feasible
    assert route_cost(r, seed42, tiny).deficit == pytest.approx(min(c.deficit for c in costs))


def test_insertion_agrees_with_brute_force(seed42, energy):
    for cap in (energy.battery_capacity, 13600.0, 9000.0):
        e = energy.with_capacity(cap)
        for order in ((1, 2, 3, 4, 5, 6), SEED42_OPTIMAL_ORDER, (6, 4, 2, 5, 3, 1)):
            r = best_charge_insertion(order, seed42, e)
            costs = [route_cost(Route(order, k), seed42, e) for k in range(-1, 6)]
            best = min(costs, key=lambda c: (c.deficit, c.consumption, -c.remaining))
            assert route_cost(r, seed42, e).key() == pytest.approx(best.key())


def test_deterministic(seed42, energy):
    assert heuristic_route(seed42, energy) == heuristic_route(seed42, energy)
    assert exhaustive_optimal(seed42, energy) == exhaustive_optimal(seed42, energy)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 6), cap=st.sampled_from([30000.0, 14000.0, 9000.0]))
def test_oracle_le_two_opt_le_input(seed, n, cap):
    g = build_scenario(ScenarioConfig(n_points=n, seed=seed, task_sizes_mb=20.0))
    e = EnergyModelConfig(battery_capacity=cap)
    start = Route(tuple(g.monitor_ids), BEFORE_FIRST_VISIT)
    improved = two_opt_improve(start, g, e)
    improved.validate(g)
    oracle = exhaustive_search(g, e).cost
    c_in, c_2 = route_cost(start, g, e), route_cost(improved, g, e)
    key = lambda c: (c.deficit, c.consumption)
    assert key(oracle) <= tuple(np.add(key(c_2), 1e-6))
    assert key(c_2) <= tuple(np.add(key(c_in), 1e-6))
