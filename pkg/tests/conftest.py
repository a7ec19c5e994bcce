import itertools
import math

import pytest

from uavgraph.energy import EnergyModelConfig, collection_energy
from uavgraph.graph import ScenarioConfig, build_scenario

# Pinned by an independent itertools/mpmath recomputation over the seed-42 positions.
SEED42_OPTIMAL_CONSUMPTION_J = 20127.772776714763
SEED42_OPTIMAL_ORDER = (1, 3, 6, 5, 2, 4)
SEED42_OPTIMAL_CHARGE_AFTER = 5
THRESHOLD_30MB_J = 15637.20121293522
THRESHOLD_35MB_J = 16105.178300194999
CALIBRATED_CAPACITY_J = 0.5 * (THRESHOLD_30MB_J + THRESHOLD_35MB_J)
COLLECTION_10MB_SIXTH_1W_J = 412.764865591898716


@pytest.fixture(scope="session")
def seed42():
    return build_scenario(ScenarioConfig())


@pytest.fixture(scope="session")
def energy():
    return EnergyModelConfig()


def brute_force_costs(graph, cfg, alloc=None):
    """Every route's (order, charge_after, pre, post) from plain arithmetic.

    Independent of the kernels: positions, hypot and the collection formula
    only.
    """
    pos = {n.id: n.position for n in graph.nodes}
    mons = graph.monitor_ids
    if alloc is None:
        frac, power = [1.0 / len(mons)] * len(mons), [cfg.max_tx_power / 2] * len(mons)
    else:
        frac, power = list(alloc.bandwidth_fraction), list(alloc.tx_power)
    coll = {
        m: collection_energy(graph.nodes[m].task_size, frac[i], power[i], cfg) for i, m in enumerate(mons)
    }
    jpm = cfg.flight_power / cfg.speed
    s, c = graph.start_id, graph.charge_id

    def d(a, b):
        return math.hypot(pos[a][0] - pos[b][0], pos[a][1] - pos[b][1])

    out = []
    for perm in itertools.permutations(mons):
        for k in range(-1, len(mons)):
            stops = [s] + ([c] if k == -1 else [])
            for i, v in enumerate(perm):
                stops.append(v)
                if i == k:
                    stops.append(c)
            stops.append(s)
            pre = post = 0.0
            after = False
            for a, b in zip(stops, stops[1:]):
                e = jpm * d(a, b) + coll.get(b, 0.0)
                if after:
                    post += e
                else:
                    pre += e
                if b == c:
                    after = True
            out.append((perm, k, pre, post))
    return out


def remaining_of(pre, post, cap):
    return cap - post if pre <= cap else cap - pre - post


def gradient_check(variant, seed, *, n_points=3, capacity=15871.0, step=1e-5, init_scale=0.5):
    """Relative error between analytic and central-difference gradients.

    Error is ``|g_a - g_n| / max(|g_a|, |g_n|)`` over the whole parameter
    vector. Returns ``(error, worst array, per-array errors)``.
    """
    import numpy as np

    from uavgraph.allocator.model import init_params
    from uavgraph.allocator.train import make_batches, total_loss
    from uavgraph.graph import ScenarioConfig, random_instances
    from uavgraph.routing import heuristic_route

    cfg = EnergyModelConfig(battery_capacity=capacity)
    graphs = random_instances(2, ScenarioConfig(n_points=n_points), task_range=(5, 35), seed=seed)
    batches = make_batches([(g, heuristic_route(g, cfg)) for g in graphs], cfg, variant)
    params = init_params(variant, seed, init_scale)
    weights = (1.0, 0.1, 10.0)
    _, analytic = total_loss(params, batches, cfg, weights)
    numeric = {}
    for name, arr in params.arrays.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + step
            up, _ = total_loss(params, batches, cfg, weights, with_grad=False)
            arr[idx] = old - step
            down, _ = total_loss(params, batches, cfg, weights, with_grad=False)
            arr[idx] = old
            g[idx] = (up - down) / (2 * step)
        numeric[name] = g
    a = np.concatenate([analytic[k].ravel() for k in params.arrays])
    n = np.concatenate([numeric[k].ravel() for k in params.arrays])
    err = float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-300))
    per = {
        k: float(np.linalg.norm(analytic[k] - numeric[k]) / max(np.linalg.norm(numeric[k]), 1e-12))
        for k in params.arrays
    }
    return err, max(per, key=per.get), per


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
