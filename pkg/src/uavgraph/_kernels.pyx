# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled route kernels. Same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

IMPLEMENTATION = "cython"

cdef enum:
    MAXN = 16


cdef inline bint _better(double d, double c, double r, double bd, double bc, double br, double tol) nogil:
    if d < bd - tol:
        return True
    if d > bd + tol:
        return False
    if c < bc - tol:
        return True
    if c > bc + tol:
        return False
    return r > br + tol


cdef inline double _remaining(double pre, double post, double capacity) nogil:
    if pre <= capacity:
        return capacity - post
    return capacity - pre - post


cdef void _all_positions(const double[:, ::1] dist, long* order, int n, long start, long charge,
                         double jpm, const double[::1] collect, double* pre_out, double* post_out) nogil:
    cdef double prefix_path[MAXN]
    cdef double prefix_col[MAXN]
    cdef double acc_p = dist[start, order[0]]
    cdef double acc_c = collect[order[0]]
    cdef int i, k
    cdef long last = order[n - 1]
    cdef double path_total, col_total
    prefix_path[0] = acc_p
    prefix_col[0] = acc_c
    for i in range(1, n):
        acc_p += dist[order[i - 1], order[i]]
        acc_c += collect[order[i]]
        prefix_path[i] = acc_p
        prefix_col[i] = acc_c
    path_total = prefix_path[n - 1]
    col_total = prefix_col[n - 1]
    # slot 0 holds charge_after == -1
    pre_out[0] = jpm * dist[start, charge]
    post_out[0] = jpm * (dist[charge, order[0]] + (path_total - prefix_path[0]) + dist[last, start]) + col_total
    for k in range(n):
        pre_out[k + 1] = jpm * (prefix_path[k] + dist[order[k], charge]) + prefix_col[k]
        if k == n - 1:
            post_out[k + 1] = jpm * dist[charge, start]
        else:
            post_out[k + 1] = jpm * (
                dist[charge, order[k + 1]] + (path_total - prefix_path[k + 1]) + dist[last, start]
            ) + (col_total - prefix_col[k])


cdef int _scan(const double[:, ::1] dist, long* order, int n, long start, long charge, double jpm,
               const double[::1] collect, double capacity, double tol,
               double* bd_out, double* bc_out, double* br_out) nogil:
    cdef double pre[MAXN + 1]
    cdef double post[MAXN + 1]
    cdef int k, best_k = -2
    cdef double c, r, d, bd = 0.0, bc = 0.0, br = 0.0
    _all_positions(dist, order, n, start, charge, jpm, collect, pre, post)
    for k in range(-1, n):
        c = pre[k + 1] + post[k + 1]
        r = _remaining(pre[k + 1], post[k + 1], capacity)
        d = -r if r < 0 else 0.0
        if best_k == -2 or _better(d, c, r, bd, bc, br, tol):
            best_k = k
            bd = d
            bc = c
            br = r
    bd_out[0] = bd
    bc_out[0] = bc
    br_out[0] = br
    return best_k


cdef bint _next_permutation(long* a, int n) nogil:
    cdef int i = n - 2, j
    cdef long t
    while i >= 0 and a[i] >= a[i + 1]:
        i -= 1
    if i < 0:
        return False
    j = n - 1
    while a[j] <= a[i]:
        j -= 1
    t = a[i]; a[i] = a[j]; a[j] = t
    i += 1
    j = n - 1
    while i < j:
        t = a[i]; a[i] = a[j]; a[j] = t
        i += 1
        j -= 1
    return True


def _check(dist, collect, int n):
    if n < 1 or n > MAXN:
        raise ValueError(f"route length must be in [1, {MAXN}], got {n}")
    return (np.ascontiguousarray(dist, dtype=np.float64),
            np.ascontiguousarray(collect, dtype=np.float64))


def segment_energies(dist, order, long charge_after, long start, long charge, double jpm, collect):
    cdef long[::1] o = np.ascontiguousarray(order, dtype=np.int64).astype(np.int_)
    cdef int n = o.shape[0]
    d_arr, c_arr = _check(dist, collect, n)
    cdef const double[:, ::1] d = d_arr
    cdef const double[::1] col = c_arr
    cdef double pre = 0.0, post = 0.0, e
    cdef long prev = start, v
    cdef int i
    if charge_after == -1:
        pre = jpm * d[start, charge]
        prev = charge
    for i in range(n):
        v = o[i]
        e = jpm * d[prev, v] + col[v]
        if i <= charge_after:
            pre += e
        else:
            post += e
        prev = v
        if i == charge_after:
            pre += jpm * d[v, charge]
            prev = charge
    post += jpm * d[prev, start]
    return pre, post


def best_insertion(dist, order, long start, long charge, double jpm, collect, double capacity, double tol):
    cdef long[::1] o = np.ascontiguousarray(order, dtype=np.int64).astype(np.int_)
    cdef int n = o.shape[0]
    d_arr, c_arr = _check(dist, collect, n)
    cdef double bd, bc, br
    cdef int k = _scan(d_arr, &o[0], n, start, charge, jpm, c_arr, capacity, tol, &bd, &bc, &br)
    return k, bc, br


def exhaustive_search(dist, monitors, long start, long charge, double jpm, collect, double capacity, double tol):
    cdef long[::1] perm = np.sort(np.asarray(monitors, dtype=np.int64)).astype(np.int_)
    cdef int n = perm.shape[0]
    d_arr, c_arr = _check(dist, collect, n)
    cdef const double[:, ::1] d = d_arr
    cdef const double[::1] col = c_arr
    cdef long[::1] best = perm.copy()
    cdef int best_k = -2, k, i
    cdef double bd = 0.0, bc = 0.0, br = 0.0, dd, cc, rr
    cdef long evaluated = 0
    with nogil:
        while True:
            k = _scan(d, &perm[0], n, start, charge, jpm, col, capacity, tol, &dd, &cc, &rr)
            evaluated += n + 1
            if best_k == -2 or _better(dd, cc, rr, bd, bc, br, tol):
                best_k = k
                bd = dd
                bc = cc
                br = rr
                for i in range(n):
                    best[i] = perm[i]
            if not _next_permutation(&perm[0], n):
                break
    return np.asarray(best).astype(np.int64), best_k, bc, br, evaluated


def min_peak_search(dist, monitors, long start, long charge, double jpm, collect):
    cdef long[::1] perm = np.sort(np.asarray(monitors, dtype=np.int64)).astype(np.int_)
    cdef int n = perm.shape[0]
    d_arr, c_arr = _check(dist, collect, n)
    cdef const double[:, ::1] d = d_arr
    cdef const double[::1] col = c_arr
    cdef long[::1] best = perm.copy()
    cdef double pre[MAXN + 1]
    cdef double post[MAXN + 1]
    cdef double peak, best_peak = np.inf
    cdef int k, i, best_k = -2
    with nogil:
        while True:
            _all_positions(d, &perm[0], n, start, charge, jpm, col, pre, post)
            for k in range(-1, n):
                peak = pre[k + 1] if pre[k + 1] > post[k + 1] else post[k + 1]
                if peak < best_peak:
                    best_peak = peak
                    best_k = k
                    for i in range(n):
                        best[i] = perm[i]
            if not _next_permutation(&perm[0], n):
                break
    return best_peak, np.asarray(best).astype(np.int64), best_k
