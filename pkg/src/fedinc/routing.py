"""User-to-node routing: relaxed lower bound, randomized rounding, oracles.

The placement problem assigns each user to the cloud or one reachable edge
so the slowest node finishes last as early as possible. Its fractional
relaxation keeps the true per-node latency function

    f_m(load) = load * unit_cost_m + min(bk_cap_m, load * bk_unit_m)

which is increasing in the load, so the optimal relaxed value is found by
bisection on the target y: node m can absorb f_m^{-1}(y) fractional users,
and a candidate y is feasible exactly when a transportation plan ships one
unit per user into reachable nodes within those capacities. Users sharing a
reachability set collapse into one supply group and feasibility is a small
exact max-flow. Any binary assignment is feasible at its own latency, so
the bisection value lower-bounds the integer optimum.

Randomized rounding samples each user's node from its fractional row; the
guarantee tested against it is ratio = 2 ln K / y + 3, meaningful when
y > ln K.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from fedinc import _kernels
from fedinc.latency import Assignment
from fedinc.model import CLOUD, Topology

BRUTE_FORCE_GUARD = 10_000_000
_BISECT_TOL = 1e-10
_FLOW_EPS = 1e-9


@dataclass(frozen=True)
class LPResult:
    """Solution of the fractional relaxation for one user subset."""

    y_s: float                   # relaxed optimum, max node latency at the loads
    fractions: np.ndarray        # (K', M+1) rows sum to 1
    loads: np.ndarray            # (M+1,) column sums
    edge_backhaul_s: np.ndarray  # (M,) forwarding term at the fractional loads
    user_ids: np.ndarray
    mode: str


def node_cost_arrays(topology: Topology, model_bits: float, inc_enabled: bool):
    """(unit_cost, bk_unit, bk_cap) vectors over nodes 0..M for the kernel
    cost model. bk_cap is one model time with merging, +inf without."""
    caps = topology.capacities
    m = topology.num_edges
    unit_cost = np.empty(m + 1)
    bk_unit = np.zeros(m + 1)
    bk_cap = np.zeros(m + 1)
    unit_cost[CLOUD] = model_bits / caps.cloud_up_bps
    if m:
        unit_cost[1:] = model_bits / caps.fronthaul_bps
        bk_unit[1:] = model_bits / caps.backhaul_bps
        bk_cap[1:] = bk_unit[1:] if inc_enabled else np.inf
    return unit_cost, bk_unit, bk_cap


def _is_inc(mode: str) -> bool:
    if mode == "inc":
        return True
    if mode == "non_inc":
        return False
    raise ValueError(f"unknown routing mode {mode!r}, expected inc or non_inc")


def _capacity_at(y: float, unit_cost, bk_unit, bk_cap) -> np.ndarray:
    """Fractional users each node can carry with latency at most y."""
    m1 = len(unit_cost)
    cap = np.empty(m1)
    for m in range(m1):
        u, b, c = unit_cost[m], bk_unit[m], bk_cap[m]
        if b == 0.0:                       # cloud: f = u * load
            cap[m] = y / u
        elif not np.isfinite(c):           # no merging: f = (u + b) * load
            cap[m] = y / (u + b)
        elif y <= u + c:                   # below the one-model kink
            cap[m] = y / (u + b)
        else:                              # past it: f = u * load + c
            cap[m] = (y - c) / u
    return cap


def _max_flow(supply: np.ndarray, arcs: list, node_caps: np.ndarray):
    """Exact max flow from supply groups into capacity-bounded nodes.

    arcs[g] lists the node ids group g may use. Returns (value, flow) with
    flow shaped (groups, nodes). Plain BFS augmenting paths; the collapsed
    graph is tiny so this is exact and fast.
    """
    g_n, n_n = len(supply), len(node_caps)
    source, sink = g_n + n_n, g_n + n_n + 1
    v = g_n + n_n + 2
    cap = np.zeros((v, v))
    for g in range(g_n):
        cap[source, g] = supply[g]
        for node in arcs[g]:
            cap[g, g_n + node] = np.inf
    for node in range(n_n):
        cap[g_n + node, sink] = node_caps[node]

    total = 0.0
    while True:
        # BFS for a shortest augmenting path in the residual graph
        parent = np.full(v, -1, dtype=np.int64)
        parent[source] = source
        queue = [source]
        while queue and parent[sink] < 0:
            nxt = []
            for a in queue:
                for b in range(v):
                    if parent[b] < 0 and cap[a, b] > _FLOW_EPS / 10:
                        parent[b] = a
                        nxt.append(b)
            queue = nxt
        if parent[sink] < 0:
            break
        push = np.inf
        b = sink
        while b != source:
            a = parent[b]
            push = min(push, cap[a, b])
            b = a
        b = sink
        while b != source:
            a = parent[b]
            cap[a, b] -= push
            cap[b, a] += push
            b = a
        total += push
    flow = np.zeros((g_n, n_n))
    for g in range(g_n):
        for node in arcs[g]:
            flow[g, node] = cap[g_n + node, g]  # residual of the reverse arc
    return total, flow


def _reach_groups(topology: Topology, user_ids) -> tuple:
    groups: dict = {}
    for row, uid in enumerate(user_ids):
        groups.setdefault(topology.reachable[uid], []).append(row)
    keys = sorted(groups, key=sorted)
    rows = [np.array(groups[key], dtype=np.int64) for key in keys]
    arcs = [sorted(key) for key in keys]
    return rows, arcs


def solve_lp(topology: Topology, model_bits: float, mode: str = "inc",
             user_ids=None) -> LPResult:
    """Relaxed routing optimum for a user subset (default: everyone)."""
    inc = _is_inc(mode)
    if user_ids is None:
        user_ids = np.arange(topology.num_users, dtype=np.int64)
    else:
        user_ids = np.asarray(user_ids, dtype=np.int64)
    k = len(user_ids)
    if k == 0:
        raise ValueError("solve_lp needs at least one user")

    unit_cost, bk_unit, bk_cap = node_cost_arrays(topology, model_bits, inc)
    group_rows, group_arcs = _reach_groups(topology, user_ids)
    supply = np.array([len(r) for r in group_rows], dtype=float)

    caps_obj = topology.capacities
    min_cap = min(caps_obj.cloud_up_bps,
                  min(caps_obj.fronthaul_bps.min(), caps_obj.backhaul_bps.min())
                  if topology.num_edges else caps_obj.cloud_up_bps)
    hi = k * model_bits / min_cap
    lo = 0.0

    def feasible(y):
        value, flow = _max_flow(supply, group_arcs,
                                _capacity_at(y, unit_cost, bk_unit, bk_cap))
        return value >= k - _FLOW_EPS, flow

    ok, flow = feasible(hi)
    if not ok:
        raise RuntimeError("relaxation bracket is infeasible; capacities degenerate")
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        ok, f = feasible(mid)
        if ok:
            hi, flow = mid, f
        else:
            lo = mid

    fractions = np.zeros((k, topology.num_edges + 1))
    for gi, rows in enumerate(group_rows):
        share = flow[gi] / len(rows)
        for r in rows:
            fractions[r] = share
    fractions /= fractions.sum(axis=1, keepdims=True)

    loads = fractions.sum(axis=0)
    per_node = _kernels.node_latencies(loads, unit_cost, bk_unit, bk_cap)
    backhaul = np.minimum(bk_cap[1:], loads[1:] * bk_unit[1:]) if topology.num_edges \
        else np.zeros(0)
    return LPResult(y_s=float(per_node.max(initial=0.0)), fractions=fractions,
                    loads=loads, edge_backhaul_s=np.asarray(backhaul, dtype=float),
                    user_ids=user_ids, mode=mode)


def randomized_round(lp: LPResult, seed) -> Assignment:
    """Sample one node per user from its fractional row.

    Row (0.7, 0.1, 0.2) splits [0, 1] into [0, 0.7], (0.7, 0.8], (0.8, 1]
    and the node owning the drawn uniform wins. Already-binary inputs pass
    through unchanged. Pure function of (fractions, seed).
    """
    frac = np.asarray(lp.fractions, dtype=np.float64)
    if frac.ndim != 2:
        raise ValueError("fractional assignment must be 2-D")
    row_sums = frac.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-9):
        raise ValueError("fractional rows must sum to 1 within 1e-9")
    num_edges = frac.shape[1] - 1
    if np.all((frac <= 1e-12) | (frac >= 1 - 1e-12)):
        return Assignment.from_nodes(frac.argmax(axis=1), num_edges,
                                     user_ids=lp.user_ids)
    cum = np.cumsum(frac, axis=1)
    cum /= cum[:, -1:]
    rng = np.random.default_rng(seed)
    u = rng.random(frac.shape[0])
    nodes = np.empty(frac.shape[0], dtype=np.int64)
    for row in range(frac.shape[0]):
        side = "left" if u[row] > 0.0 else "right"
        nodes[row] = np.searchsorted(cum[row], u[row], side=side)
    return Assignment.from_nodes(nodes, num_edges, user_ids=lp.user_ids)


def brute_force_optimal(topology: Topology, model_bits: float, mode: str = "inc",
                        user_ids=None) -> tuple:
    """Exact optimum by enumeration, guarded to small instances.

    Visits assignments in lexicographic node-id order; ties keep the first,
    i.e. the lexicographically lowest optimizer. Returns (Assignment, seconds).
    """
    inc = _is_inc(mode)
    if user_ids is None:
        user_ids = np.arange(topology.num_users, dtype=np.int64)
    else:
        user_ids = np.asarray(user_ids, dtype=np.int64)
    k = len(user_ids)
    if k == 0:
        raise ValueError("brute_force_optimal needs at least one user")
    m1 = topology.num_edges + 1
    if m1 ** k > BRUTE_FORCE_GUARD:
        raise ValueError(
            f"(M+1)^K = {m1}^{k} exceeds the enumeration guard {BRUTE_FORCE_GUARD}")

    cand_lists = [sorted(topology.reachable[uid]) for uid in user_ids]
    width = max(len(c) for c in cand_lists)
    cand = np.zeros((k, width), dtype=np.int64)
    cand_len = np.empty(k, dtype=np.int64)
    for row, c in enumerate(cand_lists):
        cand[row, :len(c)] = c
        cand_len[row] = len(c)

    unit_cost, bk_unit, bk_cap = node_cost_arrays(topology, model_bits, inc)
    nodes, best = _kernels.enumerate_best(cand, cand_len, unit_cost, bk_unit, bk_cap)
    return Assignment.from_nodes(nodes, topology.num_edges, user_ids=user_ids), float(best)


def only_cloud_assignment(num_users: int, num_edges: int, user_ids=None) -> Assignment:
    """Everyone uploads straight to the cloud."""
    return Assignment.from_nodes(np.zeros(num_users, dtype=np.int64), num_edges,
                                 user_ids=user_ids)


def only_cloud_uplink(num_users: int, model_bits: float, cloud_up_bps: float) -> float:
    """Uplink time when all K users share the cloud link: K * D / W."""
    if num_users < 0:
        raise ValueError("num_users must be nonnegative")
    return num_users * model_bits / cloud_up_bps


def approx_bound(num_users: int, y_lower: float) -> tuple:
    """(ratio, assumption_holds): rounding stays within ratio * y_lower with
    probability 1 - 1/K, provided y_lower exceeds ln K (flagged, not fatal)."""
    if num_users < 1:
        raise ValueError("num_users must be >= 1")
    if y_lower <= 0:
        raise ValueError("y_lower must be positive")
    log_k = math.log(num_users)
    return 2.0 * log_k / y_lower + 3.0, y_lower > log_k
