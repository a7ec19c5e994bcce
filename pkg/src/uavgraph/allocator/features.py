"""Per-node input features: graph geometry plus the stage-one route.

Columns::

    0 x / width            4 is_start
    1 y / height           5 visit_position / N      (route)
    2 task / max_task      6 dist_to_next / area diagonal (route)
    3 is_charge            7 arrival battery / cap   (route)

Columns 5-7 are the residual route pathway; they are zero for every node
that is not a monitoring point. Leg lengths use the fixed area diagonal as
scale so that their sum tracks absolute tour length across instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..energy import EnergyModelConfig, simulate, uniform_allocation
from ..graph import NetworkGraph, NodeKind
from ..routing import Route

N_FEATURES = 8
ROUTE_COLUMNS = (5, 6, 7)


@dataclass(frozen=True, eq=False)
class NodeFeatures:
    values: np.ndarray  # (n_nodes, N_FEATURES)
    flight_energy: float = 0.0  # J flown by the stage-one route; unit of the estimate head

    @property
    def route_part(self) -> np.ndarray:
        return self.values[:, ROUTE_COLUMNS]


def encode_features(graph: NetworkGraph, route: Route, cfg: EnergyModelConfig) -> NodeFeatures:
    route.validate(graph)
    n = len(graph.nodes)
    w, h = graph.area
    x = np.zeros((n, N_FEATURES))
    max_task = float(graph.task_sizes.max())
    diagonal = float(np.hypot(w, h))
    for node in graph.nodes:
        i = node.id
        x[i, 0] = node.position[0] / w
        x[i, 1] = node.position[1] / h
        x[i, 2] = node.task_size / max_task
        x[i, 3] = node.kind is NodeKind.CHARGE
        x[i, 4] = node.kind is NodeKind.START

    stops = route.stops(graph)
    flight = cfg.joules_per_meter * sum(graph.distance(a, b) for a, b in route.legs(graph))
    report = simulate(route, uniform_allocation(graph, cfg), graph, cfg)
    arrival = {ev.node: ev.battery for ev in report.trace if ev.kind == "arrive" and ev.node in graph.monitor_ids}
    n_mon = graph.n_monitors
    pos = 0
    for s_idx, v in enumerate(stops[1:-1], start=1):
        if v == graph.charge_id:
            continue
        pos += 1
        x[v, 5] = pos / n_mon
        x[v, 6] = graph.distance(v, stops[s_idx + 1]) / diagonal
        x[v, 7] = min(1.0, max(0.0, arrival[v] / cfg.battery_capacity))
    return NodeFeatures(x, flight)


def neighbor_weights(graph: NetworkGraph) -> np.ndarray:
    """Row-normalised mean-aggregation weights ``1 / (1 + d_ij / diameter)``, zero diagonal."""
    d = graph.distances
    diameter = float(d.max()) or 1.0
    w = 1.0 / (1.0 + d / diameter)
    np.fill_diagonal(w, 0.0)
    s = w.sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return w / s
