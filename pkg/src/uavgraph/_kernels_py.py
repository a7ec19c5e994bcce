"""Pure-Python route kernels; reference semantics for the compiled ``_kernels``.

Every function mirrors the Cython module argument for argument and performs
the same floating-point operations in the same order, so both produce the
same routes.

Conventions: ``dist`` is the node distance matrix, ``collect`` holds the
collection energy per node index (zero for non-monitors), ``jpm`` is flight
energy per metre and ``charge_after == -1`` means charging before the first
visit.
"""

from __future__ import annotations

import itertools

import numpy as np

IMPLEMENTATION = "python"


def _better(d, c, r, bd, bc, br, tol):
    # lexicographic on (deficit, consumption, -remaining) with an absolute tolerance
    if d < bd - tol:
        return True
    if d > bd + tol:
        return False
    if c < bc - tol:
        return True
    if c > bc + tol:
        return False
    return r > br + tol


def _remaining(pre, post, capacity):
    if pre <= capacity:
        return capacity - post
    return capacity - pre - post


def _lists(dist, collect):
    # nested lists index ~10x faster than numpy scalars in tight loops
    return np.asarray(dist, dtype=np.float64).tolist(), np.asarray(collect, dtype=np.float64).tolist()


def segment_energies(dist, order, charge_after, start, charge, jpm, collect):
    """Return ``(pre_charge, post_charge)`` energy of one route."""
    dist, collect = _lists(dist, collect)
    order = [int(v) for v in order]
    n = len(order)
    pre = 0.0
    post = 0.0
    prev = start
    if charge_after == -1:
        pre = jpm * dist[start][charge]
        prev = charge
    for i in range(n):
        v = order[i]
        e = jpm * dist[prev][v] + collect[v]
        if i <= charge_after:
            pre += e
        else:
            post += e
        prev = v
        if i == charge_after:
            pre += jpm * dist[v][charge]
            prev = charge
    post += jpm * dist[prev][start]
    return pre, post


def _all_positions(dist, order, start, charge, jpm, collect):
    # (pre, post) for charge_after = -1 .. n-1, O(n) via prefix sums
    n = len(order)
    prefix_path = [0.0] * n
    prefix_col = [0.0] * n
    acc_p = dist[start][order[0]]
    acc_c = collect[order[0]]
    prefix_path[0] = acc_p
    prefix_col[0] = acc_c
    for i in range(1, n):
        acc_p += dist[order[i - 1]][order[i]]
        acc_c += collect[order[i]]
        prefix_path[i] = acc_p
        prefix_col[i] = acc_c
    last = order[n - 1]
    path_total = prefix_path[n - 1]
    col_total = prefix_col[n - 1]
    out = []
    for k in range(-1, n):
        if k == -1:
            pre = jpm * dist[start][charge]
            post = jpm * (dist[charge][order[0]] + (path_total - prefix_path[0]) + dist[last][start]) + col_total
        else:
            pre = jpm * (prefix_path[k] + dist[order[k]][charge]) + prefix_col[k]
            if k == n - 1:
                post = jpm * dist[charge][start]
            else:
                post = jpm * (
                    dist[charge][order[k + 1]] + (path_total - prefix_path[k + 1]) + dist[last][start]
                ) + (col_total - prefix_col[k])
        out.append((pre, post))
    return out


def _scan_positions(dist, order, start, charge, jpm, collect, capacity, tol):
    best_k = -2
    bd = bc = br = 0.0
    for k, (pre, post) in enumerate(_all_positions(dist, order, start, charge, jpm, collect), start=-1):
        c = pre + post
        r = _remaining(pre, post, capacity)
        d = -r if r < 0 else 0.0
        if best_k == -2 or _better(d, c, r, bd, bc, br, tol):
            best_k, bd, bc, br = k, d, c, r
    return best_k, bd, bc, br


def best_insertion(dist, order, start, charge, jpm, collect, capacity, tol):
    """Best charging position for ``order``: ``(charge_after, consumption, remaining)``."""
    dist, collect = _lists(dist, collect)
    k, _, c, r = _scan_positions(dist, [int(v) for v in order], start, charge, jpm, collect, capacity, tol)
    return k, c, r


def exhaustive_search(dist, monitors, start, charge, jpm, collect, capacity, tol):
    """Enumerate every visit order (lexicographic) and charging position.

    Returns ``(order, charge_after, consumption, remaining, evaluated)``.
    Ties within ``tol`` keep the earliest candidate in enumeration order.
    """
    dist, collect = _lists(dist, collect)
    mons = sorted(int(m) for m in monitors)
    best = None
    bd = bc = br = 0.0
    evaluated = 0
    for perm in itertools.permutations(mons):
        k, d, c, r = _scan_positions(dist, perm, start, charge, jpm, collect, capacity, tol)
        evaluated += len(perm) + 1
        if best is None or _better(d, c, r, bd, bc, br, tol):
            best = (perm, k)
            bd, bc, br = d, c, r
    return np.array(best[0], dtype=np.int64), best[1], bc, br, evaluated


def min_peak_search(dist, monitors, start, charge, jpm, collect):
    """Smallest achievable ``max(pre_charge, post_charge)`` over all routes.

    This is the least battery capacity that admits a feasible mission.
    Returns ``(peak, order, charge_after)``.
    """
    dist, collect = _lists(dist, collect)
    mons = sorted(int(m) for m in monitors)
    best_peak = np.inf
    best = None
    for perm in itertools.permutations(mons):
        for k, (pre, post) in enumerate(_all_positions(dist, perm, start, charge, jpm, collect), start=-1):
            peak = pre if pre > post else post
            if peak < best_peak:
                best_peak = peak
                best = (perm, k)
    return best_peak, np.array(best[0], dtype=np.int64), best[1]
