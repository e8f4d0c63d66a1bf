# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the _kernels_py hot loops.

Arithmetic mirrors the numpy path operation for operation (multiply,
multiply, min, add, then max over nodes) so results match bit for bit and
the backends are interchangeable.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _pick(const double[::1] cum, double u) noexcept nogil:
    # first index with cum[idx] >= u (searchsorted side='left'); a draw of
    # exactly 0.0 instead takes the first positive-width interval
    cdef Py_ssize_t lo = 0, hi = cum.shape[0] - 1, mid
    if u == 0.0:
        while lo < hi:
            mid = (lo + hi) >> 1
            if cum[mid] <= 0.0:
                lo = mid + 1
            else:
                hi = mid
        return lo
    while lo < hi:
        mid = (lo + hi) >> 1
        if cum[mid] < u:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline double _max_latency(double* loads, const double[::1] unit_cost,
                                const double[::1] bk_unit,
                                const double[::1] bk_cap,
                                Py_ssize_t m1) noexcept nogil:
    cdef double best = 0.0, t, b
    cdef Py_ssize_t m
    for m in range(m1):
        t = loads[m] * unit_cost[m]
        b = loads[m] * bk_unit[m]
        if bk_cap[m] < b:
            b = bk_cap[m]
        t = t + b
        if m == 0 or t > best:
            best = t
    return best


def assignment_uplink_batch(const long long[:, ::1] choices,
                            const double[::1] unit_cost,
                            const double[::1] bk_unit,
                            const double[::1] bk_cap):
    cdef Py_ssize_t trials = choices.shape[0], k = choices.shape[1]
    cdef Py_ssize_t m1 = unit_cost.shape[0]
    out_arr = np.empty(trials, dtype=np.float64)
    loads_arr = np.zeros(m1, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] loads = loads_arr
    cdef Py_ssize_t t, j, m
    with nogil:
        for t in range(trials):
            for m in range(m1):
                loads[m] = 0.0
            for j in range(k):
                loads[choices[t, j]] += 1.0
            out[t] = _max_latency(&loads[0], unit_cost, bk_unit, bk_cap, m1)
    return out_arr


def round_and_eval(const double[:, ::1] cum, const double[:, ::1] uniforms,
                   const double[::1] unit_cost, const double[::1] bk_unit,
                   const double[::1] bk_cap, bint want_counts):
    cdef Py_ssize_t trials = uniforms.shape[0], k = uniforms.shape[1]
    cdef Py_ssize_t m1 = unit_cost.shape[0]
    lat_arr = np.empty(trials, dtype=np.float64)
    loads_arr = np.zeros(m1, dtype=np.float64)
    counts_arr = np.zeros((k, m1), dtype=np.int64) if want_counts else None
    cdef double[::1] lat = lat_arr
    cdef double[::1] loads = loads_arr
    cdef long long[:, ::1] counts
    cdef bint tally = want_counts
    if want_counts:
        counts = counts_arr
    cdef Py_ssize_t t, j, node
    with nogil:
        for t in range(trials):
            for j in range(m1):
                loads[j] = 0.0
            for j in range(k):
                node = _pick(cum[j], uniforms[t, j])
                loads[node] += 1.0
                if tally:
                    counts[j, node] += 1
            lat[t] = _max_latency(&loads[0], unit_cost, bk_unit, bk_cap, m1)
    return lat_arr, counts_arr


def enumerate_best(const long long[:, ::1] cand, const long long[::1] cand_len,
                   const double[::1] unit_cost, const double[::1] bk_unit,
                   const double[::1] bk_cap):
    cdef Py_ssize_t k = cand_len.shape[0], m1 = unit_cost.shape[0]
    cdef long long total = 1
    cdef Py_ssize_t j, m
    for j in range(k):
        total *= cand_len[j]

    digits_arr = np.zeros(k, dtype=np.int64)
    loads_arr = np.zeros(m1, dtype=np.float64)
    best_arr = np.empty(k, dtype=np.int64)
    cdef long long[::1] digits = digits_arr
    cdef double[::1] loads = loads_arr
    cdef long long[::1] best_nodes = best_arr

    cdef double best_val = 0.0, val
    cdef bint have_best = 0
    cdef long long it
    cdef Py_ssize_t pos
    with nogil:
        for m in range(m1):
            loads[m] = 0.0
        for j in range(k):
            loads[cand[j, 0]] += 1.0
        for it in range(total):
            val = _max_latency(&loads[0], unit_cost, bk_unit, bk_cap, m1)
            if not have_best or val < best_val:
                best_val = val
                have_best = 1
                for j in range(k):
                    best_nodes[j] = cand[j, digits[j]]
            # odometer step, least significant digit last => lexicographic order
            pos = k - 1
            while pos >= 0:
                loads[cand[pos, digits[pos]]] -= 1.0
                digits[pos] += 1
                if digits[pos] < cand_len[pos]:
                    loads[cand[pos, digits[pos]]] += 1.0
                    break
                digits[pos] = 0
                loads[cand[pos, 0]] += 1.0
                pos -= 1
    return best_arr, best_val
