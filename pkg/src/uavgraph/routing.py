"""Tours with a single charging stop: evaluation, exact search and 2-opt."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .energy import Allocation, EnergyModelConfig, collection_energies, uniform_allocation
from .graph import NetworkGraph

BEFORE_FIRST_VISIT = -1
MAX_EXHAUSTIVE_N = 9
# energies closer than this (J) are ties; matches the local-search stopping rule
TIE_TOL = 1e-9


class RouteError(ValueError):
    pass


@dataclass(frozen=True)
class Route:
    """Visit order over every monitor plus one charging stop.

    ``charge_after`` is the index in ``visit_order`` after which the UAV
    detours to the charging station; ``BEFORE_FIRST_VISIT`` (-1) charges on
    the way out. Start and end at the start node are implicit.
    """

    visit_order: tuple[int, ...]
    charge_after: int

    def validate(self, graph: NetworkGraph) -> None:
        if sorted(self.visit_order) != sorted(graph.monitor_ids) or len(self.visit_order) != graph.n_monitors:
            raise RouteError(
                f"visit order {list(self.visit_order)} is not a permutation of monitors {list(graph.monitor_ids)}"
            )
        if not (BEFORE_FIRST_VISIT <= self.charge_after <= len(self.visit_order) - 1):
            raise RouteError(f"charge_after={self.charge_after} out of range for {len(self.visit_order)} visits")

    def stops(self, graph: NetworkGraph) -> list[int]:
        """Full node sequence, start to start, including the charge stop."""
        seq = [graph.start_id]
        if self.charge_after == BEFORE_FIRST_VISIT:
            seq.append(graph.charge_id)
        for i, v in enumerate(self.visit_order):
            seq.append(v)
            if i == self.charge_after:
                seq.append(graph.charge_id)
        seq.append(graph.start_id)
        return seq

    def legs(self, graph: NetworkGraph) -> Iterator[tuple[int, int]]:
        s = self.stops(graph)
        return zip(s[:-1], s[1:])

    def reversed(self) -> "Route":
        """Same tour flown backwards; the charge stop keeps its neighbours."""
        n = len(self.visit_order)
        return Route(tuple(reversed(self.visit_order)), n - 2 - self.charge_after)


@dataclass(frozen=True)
class RouteCost:
    consumption: float
    remaining: float
    pre_charge: float
    post_charge: float

    @property
    def deficit(self) -> float:
        return max(0.0, -self.remaining)

    @property
    def feasible(self) -> bool:
        return self.remaining >= 0

    def key(self) -> tuple[float, float, float]:
        return (self.deficit, self.consumption, -self.remaining)


def remaining_after(pre: float, post: float, capacity: float) -> float:
    # no recharge is credited when the station is reached with a depleted battery
    return capacity - post if pre <= capacity else capacity - pre - post


def collect_by_node(graph: NetworkGraph, energy: EnergyModelConfig, alloc: Allocation) -> np.ndarray:
    out = np.zeros(len(graph.nodes))
    out[list(graph.monitor_ids)] = collection_energies(graph, alloc, energy)
    return out


class _Problem:
    """Bundle of kernel arguments for one (graph, energy, allocation)."""

    def __init__(self, graph: NetworkGraph, energy: EnergyModelConfig, alloc: Allocation | None):
        self.graph = graph
        self.energy = energy
        self.alloc = alloc if alloc is not None else uniform_allocation(graph, energy)
        self.dist = np.ascontiguousarray(graph.distances)
        self.collect = collect_by_node(graph, energy, self.alloc)
        self.jpm = energy.joules_per_meter
        self.cap = energy.battery_capacity

    def cost(self, order: Sequence[int], charge_after: int) -> RouteCost:
        pre, post = kernels.segment_energies(
            self.dist, np.asarray(order, dtype=np.int64), charge_after,
            self.graph.start_id, self.graph.charge_id, self.jpm, self.collect,
        )
        return RouteCost(pre + post, remaining_after(pre, post, self.cap), pre, post)

    def insert(self, order: Sequence[int]) -> tuple[int, float, float]:
        return kernels.best_insertion(
            self.dist, np.asarray(order, dtype=np.int64), self.graph.start_id, self.graph.charge_id,
            self.jpm, self.collect, self.cap, TIE_TOL,
        )


def _better(a: RouteCost, b: RouteCost, tol: float = TIE_TOL) -> bool:
    for x, y in zip(a.key(), b.key()):
        if x < y - tol:
            return True
        if x > y + tol:
            return False
    return False


def route_length(route: Route, graph: NetworkGraph) -> float:
    """Planar length in metres of the full tour including the charging detour."""
    route.validate(graph)
    return float(sum(graph.distance(a, b) for a, b in route.legs(graph)))


def route_cost(
    route: Route, graph: NetworkGraph, energy: EnergyModelConfig, alloc: Allocation | None = None
) -> RouteCost:
    route.validate(graph)
    return _Problem(graph, energy, alloc).cost(route.visit_order, route.charge_after)


def best_charge_insertion(
    visit_order: Sequence[int],
    graph: NetworkGraph,
    energy: EnergyModelConfig,
    alloc: Allocation | None = None,
) -> Route:
    """Pick the charging slot among the N+1 positions.

    Feasible slots win over infeasible ones; among feasible slots the lowest
    consumption wins; with no feasible slot the smallest deficit wins.
    """
    order = tuple(int(v) for v in visit_order)
    Route(order, BEFORE_FIRST_VISIT).validate(graph)
    k, _, _ = _Problem(graph, energy, alloc).insert(order)
    return Route(order, int(k))


@dataclass(frozen=True)
class SearchResult:
    route: Route
    cost: RouteCost
    evaluated: int

    @property
    def feasible(self) -> bool:
        return self.cost.feasible


def exhaustive_search(
    graph: NetworkGraph, energy: EnergyModelConfig, alloc: Allocation | None = None
) -> SearchResult:
    """Enumerate all N!·(N+1) routes; see :func:`exhaustive_optimal`."""
    n = graph.n_monitors
    if n > MAX_EXHAUSTIVE_N:
        raise RouteError(f"exhaustive search supports N <= {MAX_EXHAUSTIVE_N}, got N={n}")
    p = _Problem(graph, energy, alloc)
    order, k, _, _, evaluated = kernels.exhaustive_search(
        p.dist, np.asarray(graph.monitor_ids, dtype=np.int64), graph.start_id, graph.charge_id,
        p.jpm, p.collect, p.cap, TIE_TOL,
    )
    route = Route(tuple(int(v) for v in order), int(k))
    return SearchResult(route, p.cost(route.visit_order, route.charge_after), int(evaluated))


def exhaustive_optimal(
    graph: NetworkGraph, energy: EnergyModelConfig, alloc: Allocation | None = None
) -> Route:
    """Ground-truth route for N <= 9.

    Minimises consumed energy over feasible routes, or the deficit when no
    route is feasible. Ties go to the route whose battery returns fuller (a
    tour and its reverse consume the same energy), then to the
    lexicographically smallest visit order.
    """
    return exhaustive_search(graph, energy, alloc).route


def min_peak_segment(
    graph: NetworkGraph, energy: EnergyModelConfig, alloc: Allocation | None = None
) -> tuple[float, Route]:
    """Smallest battery capacity that lets some route finish without depletion."""
    if graph.n_monitors > MAX_EXHAUSTIVE_N:
        raise RouteError(f"exhaustive search supports N <= {MAX_EXHAUSTIVE_N}, got N={graph.n_monitors}")
    p = _Problem(graph, energy, alloc)
    peak, order, k = kernels.min_peak_search(
        p.dist, np.asarray(graph.monitor_ids, dtype=np.int64), graph.start_id, graph.charge_id,
        p.jpm, p.collect,
    )
    return float(peak), Route(tuple(int(v) for v in order), int(k))


def nearest_neighbor_order(graph: NetworkGraph, prefix: Sequence[int] = ()) -> tuple[int, ...]:
    """Extend ``prefix`` greedily with the nearest unvisited monitor (ties: lower id)."""
    order = list(prefix)
    remaining = [m for m in graph.monitor_ids if m not in set(order)]
    cur = order[-1] if order else graph.start_id
    while remaining:
        nxt = min(remaining, key=lambda m: (graph.distance(cur, m), m))
        order.append(nxt)
        remaining.remove(nxt)
        cur = nxt
    return tuple(order)


def two_opt_improve(
    route: Route,
    graph: NetworkGraph,
    energy: EnergyModelConfig,
    alloc: Allocation | None = None,
    *,
    max_rounds: int = 10_000,
) -> Route:
    """Best-improvement 2-opt with charging-slot re-insertion after every move.

    Stops when no segment reversal or slot change improves the route by more
    than ``TIE_TOL``; the result is never worse than ``route``.
    """
    route.validate(graph)
    p = _Problem(graph, energy, alloc)
    order = tuple(route.visit_order)
    best_cost = p.cost(order, route.charge_after)
    best_k = route.charge_after
    k, _, _ = p.insert(order)
    cand = p.cost(order, k)
    if _better(cand, best_cost):
        best_k, best_cost = k, cand

    n = len(order)
    for _ in range(max_rounds):
        move = None
        move_cost = best_cost
        for i in range(n - 1):
            for j in range(i + 1, n):
                trial = order[:i] + order[i : j + 1][::-1] + order[j + 1 :]
                tk, _, _ = p.insert(trial)
                tc = p.cost(trial, tk)
                if _better(tc, move_cost):
                    move, move_cost = (trial, tk), tc
        if move is None:
            break
        order, best_k = move
        best_cost = move_cost
    return Route(order, int(best_k))


def heuristic_route(graph: NetworkGraph, energy: EnergyModelConfig, alloc: Allocation | None = None) -> Route:
    """Nearest-neighbour tour, best charging slot, then 2-opt."""
    start = best_charge_insertion(nearest_neighbor_order(graph), graph, energy, alloc)
    return two_opt_improve(start, graph, energy, alloc)
