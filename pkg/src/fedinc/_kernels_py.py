"""Numpy reference implementations of the hot kernels.

The compiled twins in _speedups.pyx perform the same arithmetic in the same
per-element order, so both backends produce identical bits and either can
serve any caller. Node cost model, shared by routing and evaluation:

    T_m(load) = load * unit_cost[m] + min(bk_cap[m], load * bk_unit[m])

where unit_cost is the per-model transfer time on the node's shared uplink,
bk_unit is the per-model backhaul time (zero for the cloud), and bk_cap is
the merged-forwarding ceiling: one model time when in-network aggregation is
on, +inf when off (every copy forwarded), 0 for the cloud.
"""

from __future__ import annotations

import numpy as np


def node_latencies(loads, unit_cost, bk_unit, bk_cap) -> np.ndarray:
    """Per-node uplink seconds for one load vector (or a batch of them)."""
    loads = np.asarray(loads, dtype=np.float64)
    return loads * unit_cost + np.minimum(bk_cap, loads * bk_unit)


def assignment_uplink_batch(choices, unit_cost, bk_unit, bk_cap) -> np.ndarray:
    """Uplink seconds per assignment in a batch.

    choices has shape (trials, K), entries are node ids 0..M.
    """
    choices = np.asarray(choices)
    trials, k = choices.shape
    m1 = len(unit_cost)
    loads = np.zeros((trials, m1), dtype=np.float64)
    rows = np.arange(trials)
    for j in range(k):
        loads[rows, choices[:, j]] += 1.0
    return node_latencies(loads, unit_cost, bk_unit, bk_cap).max(axis=1)


def round_and_eval(cum, uniforms, unit_cost, bk_unit, bk_cap,
                   want_counts: bool = False):
    """Randomized rounding of a fractional assignment, batched.

    cum holds the row-wise cumulative probabilities (K, M+1); uniforms has
    shape (trials, K). A draw u selects the first node whose cumulative
    value reaches it, i.e. node j iff cum[j-1] < u <= cum[j] with the first
    interval closed at zero. Returns per-trial uplink seconds, and when
    want_counts is set also the (K, M+1) tally of selections.
    """
    cum = np.asarray(cum, dtype=np.float64)
    uniforms = np.asarray(uniforms, dtype=np.float64)
    trials, k = uniforms.shape
    choices = np.empty((trials, k), dtype=np.int64)
    for j in range(k):
        choices[:, j] = np.searchsorted(cum[j], uniforms[:, j], side="left")
        # a draw of exactly 0.0 must not land on a leading zero-width interval
        zero = uniforms[:, j] == 0.0
        if zero.any():
            choices[zero, j] = np.searchsorted(cum[j], 0.0, side="right")
    lat = assignment_uplink_batch(choices, unit_cost, bk_unit, bk_cap)
    if not want_counts:
        return lat, None
    m1 = len(unit_cost)
    counts = np.zeros((k, m1), dtype=np.int64)
    for j in range(k):
        counts[j] = np.bincount(choices[:, j], minlength=m1)
    return lat, counts


def enumerate_best(cand, cand_len, unit_cost, bk_unit, bk_cap,
                   chunk: int = 1 << 15):
    """Exhaustive search over all reachability-respecting assignments.

    cand is (K, width) with each row the user's candidate node ids sorted
    ascending and padded; cand_len gives the true row lengths. Assignments
    are visited in lexicographic order of the node-id tuple and ties keep
    the first (lexicographically lowest) optimum. Returns (nodes, seconds).
    """
    cand = np.asarray(cand, dtype=np.int64)
    cand_len = np.asarray(cand_len, dtype=np.int64)
    k = len(cand_len)
    total = int(np.prod(cand_len, dtype=np.int64))
    # mixed-radix decode: user 0 is the most significant digit
    strides = np.ones(k, dtype=np.int64)
    for j in range(k - 2, -1, -1):
        strides[j] = strides[j + 1] * cand_len[j + 1]

    best_val = np.inf
    best_idx = -1
    m1 = len(unit_cost)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        loads = np.zeros((len(idx), m1), dtype=np.float64)
        rows = np.arange(len(idx))
        for j in range(k):
            digit = (idx // strides[j]) % cand_len[j]
            loads[rows, cand[j, digit]] += 1.0
        lat = node_latencies(loads, unit_cost, bk_unit, bk_cap).max(axis=1)
        pos = int(lat.argmin())
        if lat[pos] < best_val:
            best_val = float(lat[pos])
            best_idx = int(idx[pos])

    nodes = np.empty(k, dtype=np.int64)
    for j in range(k):
        nodes[j] = cand[j, (best_idx // strides[j]) % cand_len[j]]
    return nodes, best_val
