"""Time the compiled route kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--sizes 5 6 7 8] [--repeat 3]

Both implementations get identical inputs; results are also checked for
agreement so a speedup never hides a divergence.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from uavgraph import _kernels_py
from uavgraph.energy import EnergyModelConfig
from uavgraph.graph import ScenarioConfig, build_scenario
from uavgraph.routing import TIE_TOL, _Problem

try:
    from uavgraph import _kernels as compiled
except ImportError:
    compiled = None


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench(n, repeat):
    graph = build_scenario(ScenarioConfig(n_points=n))
    p = _Problem(graph, EnergyModelConfig(), None)
    mons = np.asarray(graph.monitor_ids, dtype=np.int64)
    s, c = graph.start_id, graph.charge_id
    calls = {
        "exhaustive_search": lambda k: k.exhaustive_search(p.dist, mons, s, c, p.jpm, p.collect, p.cap, TIE_TOL),
        "min_peak_search": lambda k: k.min_peak_search(p.dist, mons, s, c, p.jpm, p.collect),
        "best_insertion x1000": lambda k: [
            k.best_insertion(p.dist, mons, s, c, p.jpm, p.collect, p.cap, TIE_TOL) for _ in range(1000)
        ],
    }
    rows = []
    for name, call in calls.items():
        t_py, r_py = best_time(lambda: call(_kernels_py), repeat)
        if compiled is None:
            rows.append((n, name, t_py, None, None))
            continue
        t_cy, r_cy = best_time(lambda: call(compiled), repeat)
        if name != "best_insertion x1000" and tuple(np.ravel(r_py[0])) != tuple(np.ravel(r_cy[0])):
            raise SystemExit(f"{name} N={n}: implementations disagree")
        rows.append((n, name, t_py, t_cy, t_py / t_cy))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[5, 6, 7, 8])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'N':>2}  {'kernel':<22} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for n in args.sizes:
        for n_, name, t_py, t_cy, ratio in bench(n, args.repeat):
            cy = f"{t_cy:10.4f}" if t_cy is not None else f"{'n/a':>10}"
            sp = f"{ratio:7.1f}x" if ratio is not None else f"{'n/a':>8}"
            print(f"{n_:>2}  {name:<22} {t_py:10.4f} {cy} {sp}")


if __name__ == "__main__":
    main()
