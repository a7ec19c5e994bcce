import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavgraph import kernels
from uavgraph.energy import EnergyModelConfig
from uavgraph.graph import ScenarioConfig, build_scenario
from uavgraph.routing import _Problem

needs_ext = pytest.mark.skipif(kernels.compiled_impl is None, reason="compiled extension not built")


def _args(seed, n, cap, task):
    g = build_scenario(ScenarioConfig(n_points=n, seed=seed, task_sizes_mb=task))
    p = _Problem(g, EnergyModelConfig(battery_capacity=cap), None)
    mons = np.asarray(g.monitor_ids, dtype=np.int64)
    return g, p, mons


def test_selector_reports_implementation():
    assert kernels.IMPLEMENTATION in ("python", "cython")
    assert kernels.python_impl.IMPLEMENTATION == "python"


@needs_ext
def test_compiled_is_active_when_built():
    assert kernels.IMPLEMENTATION == "cython"


@needs_ext
@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    n=st.integers(1, 6),
    cap=st.sampled_from([30000.0, 14000.0, 8000.0, 500.0]),
    task=st.sampled_from([5.0, 20.0, 35.0]),
)
def test_exhaustive_parity(seed, n, cap, task):
    g, p, mons = _args(seed, n, cap, task)
    a = kernels.python_impl.exhaustive_search(p.dist, mons, g.start_id, g.charge_id, p.jpm, p.collect, p.cap, 1e-9)
    b = kernels.compiled_impl.exhaustive_search(p.dist, mons, g.start_id, g.charge_id, p.jpm, p.collect, p.cap, 1e-9)
    assert list(a[0]) == list(b[0])
    assert a[1:] == b[1:]


@needs_ext
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 6), task=st.sampled_from([5.0, 35.0]))
def test_min_peak_parity(seed, n, task):
    g, p, mons = _args(seed, n, 30000.0, task)
    a = kernels.python_impl.min_peak_search(p.dist, mons, g.start_id, g.charge_id, p.jpm, p.collect)
    b = kernels.compiled_impl.min_peak_search(p.dist, mons, g.start_id, g.charge_id, p.jpm, p.collect)
    assert a[0] == b[0]
    assert list(a[1]) == list(b[1])
    assert a[2] == b[2]


@needs_ext
@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    perm=st.permutations([1, 2, 3, 4, 5, 6]),
    cap=st.sampled_from([30000.0, 9000.0, 100.0]),
)
def test_insertion_and_segment_parity(seed, perm, cap):
    g, p, _ = _args(seed, 6, cap, 20.0)
    order = np.asarray(perm, dtype=np.int64)
    for k in range(-1, 6):
        a = kernels.python_impl.segment_energies(p.dist, order, k, g.start_id, g.charge_id, p.jpm, p.collect)
        b = kernels.compiled_impl.segment_energies(p.dist, order, k, g.start_id, g.charge_id, p.jpm, p.collect)
        assert a == b
    a = kernels.python_impl.best_insertion(p.dist, order, g.start_id, g.charge_id, p.jpm, p.collect, p.cap, 1e-9)
    b = kernels.compiled_impl.best_insertion(p.dist, order, g.start_id, g.charge_id, p.jpm, p.collect, p.cap, 1e-9)
    assert a == b


def test_min_peak_is_smallest_feasible_capacity(seed42, energy):
    from uavgraph.routing import exhaustive_search, min_peak_segment

    g = seed42.with_task_sizes(30.0)
    peak, route = min_peak_segment(g, energy)
    assert exhaustive_search(g, energy.with_capacity(peak)).cost.feasible
    assert not exhaustive_search(g, energy.with_capacity(peak - 1e-6)).cost.feasible


def test_pure_python_switch_gives_same_oracle(tmp_path):
    import subprocess
    import sys

    code = (
        "from uavgraph import kernels, build_scenario, ScenarioConfig, EnergyModelConfig;"
        "from uavgraph.routing import exhaustive_search;"
        "r = exhaustive_search(build_scenario(ScenarioConfig()), EnergyModelConfig());"
        "print(kernels.IMPLEMENTATION, r.route.visit_order, r.route.charge_after, repr(r.cost.consumption))"
    )
    env = {"UAVGRAPH_PURE_PYTHON": "1", "PATH": "/usr/bin:/bin"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    impl, rest = out.split(" ", 1)
    assert impl == "python"
    from uavgraph.routing import exhaustive_search

    r = exhaustive_search(build_scenario(ScenarioConfig()), EnergyModelConfig())
    assert rest.strip() == f"{r.route.visit_order} {r.route.charge_after} {r.cost.consumption!r}"
