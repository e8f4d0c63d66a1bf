"""Per-round latency model.

Downlink is a broadcast, so it costs one model transfer regardless of K.
Uplink is evaluated per node: users assigned to the cloud share its uplink,
users at an edge share that edge's fronthaul and the edge forwards over its
backhaul, either one merged update (in-network aggregation on) or one copy
per user (off). Equal rate shares are optimal for every node, so the closed
form below is exact; the raw-rate evaluator exists to let tests demonstrate
that dominance rather than assume it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from fedinc.model import CLOUD, Topology


@dataclass
class Assignment:
    """Binary user-to-node map. Row k selects exactly one node (column 0 is
    the cloud). Rows align with `user_ids`, which defaults to 0..K-1."""

    matrix: np.ndarray
    user_ids: np.ndarray = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix)
        if self.matrix.ndim != 2:
            raise ValueError("assignment matrix must be 2-D (users x nodes)")
        vals = np.unique(self.matrix)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError("assignment entries must be 0 or 1")
        if not np.all(self.matrix.sum(axis=1) == 1):
            raise ValueError("each user must be assigned to exactly one node")
        self.matrix = self.matrix.astype(np.int8)
        if self.user_ids is None:
            self.user_ids = np.arange(self.matrix.shape[0], dtype=np.int64)
        else:
            self.user_ids = np.asarray(self.user_ids, dtype=np.int64)
            if len(self.user_ids) != self.matrix.shape[0]:
                raise ValueError("user_ids length must match matrix rows")

    @classmethod
    def from_nodes(cls, nodes: Sequence[int], num_edges: int,
                   user_ids=None) -> "Assignment":
        nodes = np.asarray(nodes, dtype=np.int64)
        if len(nodes) and (nodes.min() < 0 or nodes.max() > num_edges):
            raise ValueError("node id out of range")
        mat = np.zeros((len(nodes), num_edges + 1), dtype=np.int8)
        mat[np.arange(len(nodes)), nodes] = 1
        return cls(mat, user_ids=user_ids)

    @property
    def nodes(self) -> np.ndarray:
        """Chosen node id per row."""
        return self.matrix.argmax(axis=1)

    @property
    def loads(self) -> np.ndarray:
        """Users per node, length M+1."""
        return self.matrix.sum(axis=0).astype(np.int64)

    def check_reachability(self, topology: Topology) -> None:
        for row, uid in enumerate(self.user_ids):
            node = int(self.matrix[row].argmax())
            if node not in topology.reachable[uid]:
                raise ValueError(f"user {uid} assigned to unreachable node {node}")


@dataclass(frozen=True)
class RateAllocation:
    """Uplink rate per user on its assigned link, bit/s, aligned with the
    assignment rows. Backhaul links are not shared and keep full capacity."""

    uplink_bps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "uplink_bps", np.asarray(self.uplink_bps, dtype=float))
        if np.any(self.uplink_bps <= 0):
            raise ValueError("rates must be positive")


@dataclass(frozen=True)
class LatencyReport:
    downlink_s: float
    uplink_s: float                 # max over nodes
    per_node_uplink_s: np.ndarray   # length M+1, zero for empty nodes
    edge_backhaul_s: np.ndarray     # length M, forwarding term per edge
    loads: np.ndarray               # users per node

    @property
    def bottleneck_node(self) -> int:
        return int(self.per_node_uplink_s.argmax())


def downlink_latency(model_bits: float, cloud_down_bps: float) -> float:
    """Broadcast time for one model copy."""
    if model_bits <= 0 or cloud_down_bps <= 0:
        raise ValueError("model_bits and cloud_down_bps must be positive")
    return model_bits / cloud_down_bps


def _backhaul_seconds(load: float, model_bits: float, backhaul_bps: float,
                      inc_enabled: bool) -> float:
    """Forwarding time edge -> cloud. With in-network aggregation the edge
    sends min(1, load) merged models, otherwise one copy per user."""
    if load <= 0:
        return 0.0
    copies = min(1.0, load) if inc_enabled else load
    return model_bits * copies / backhaul_bps


def uplink_node_latencies(loads, topology: Topology, model_bits: float,
                          inc_enabled: bool) -> tuple:
    """Closed-form per-node uplink times under equal rate shares.

    Returns (per_node_seconds (M+1,), edge_backhaul_seconds (M,)).
    """
    caps = topology.capacities
    loads = np.asarray(loads, dtype=float)
    per_node = np.zeros(topology.num_edges + 1)
    backhaul = np.zeros(topology.num_edges)
    per_node[CLOUD] = model_bits * loads[CLOUD] / caps.cloud_up_bps
    for m in range(topology.num_edges):
        lm = loads[m + 1]
        if lm <= 0:
            continue
        backhaul[m] = _backhaul_seconds(lm, model_bits, caps.backhaul_bps[m], inc_enabled)
        per_node[m + 1] = model_bits * lm / caps.fronthaul_bps[m] + backhaul[m]
    return per_node, backhaul


def evaluate_assignment(assignment: Assignment, topology: Topology,
                        model_bits: float, inc_enabled: bool = True) -> LatencyReport:
    """Uplink latency of a binary assignment with optimal (equal) rate shares.

    The slowest node determines the round's uplink time; empty nodes
    contribute zero.
    """
    assignment.check_reachability(topology)
    loads = assignment.loads
    per_node, backhaul = uplink_node_latencies(loads, topology, model_bits, inc_enabled)
    return LatencyReport(
        downlink_s=downlink_latency(model_bits, topology.capacities.cloud_down_bps),
        uplink_s=float(per_node.max(initial=0.0)),
        per_node_uplink_s=per_node,
        edge_backhaul_s=backhaul,
        loads=loads,
    )


def equal_rate_allocation(assignment: Assignment, topology: Topology) -> RateAllocation:
    """Split each shared uplink capacity evenly among the users on it."""
    loads = assignment.loads
    caps = topology.capacities
    nodes = assignment.nodes
    rates = np.empty(len(nodes))
    for row, node in enumerate(nodes):
        cap = caps.cloud_up_bps if node == CLOUD else caps.fronthaul_bps[node - 1]
        rates[row] = cap / loads[node]
    return RateAllocation(rates)


def evaluate_with_rates(assignment: Assignment, topology: Topology,
                        model_bits: float, rates: RateAllocation,
                        inc_enabled: bool = True) -> float:
    """Uplink latency under an explicit per-user rate split (diagnostic).

    Validates that rates on each shared link fit its capacity, then takes
    per node the slowest user transfer plus the edge forwarding term. Used
    to check that equal shares are never beaten by another feasible split.
    """
    caps = topology.capacities
    nodes = assignment.nodes
    r = rates.uplink_bps
    if len(r) != len(nodes):
        raise ValueError("rate vector must align with assignment rows")
    for node in range(topology.num_edges + 1):
        on_node = r[nodes == node]
        cap = caps.cloud_up_bps if node == CLOUD else caps.fronthaul_bps[node - 1]
        if on_node.size and on_node.sum() > cap * (1 + 1e-12):
            raise ValueError(f"rates on node {node} exceed its capacity")
    loads = assignment.loads
    worst = 0.0
    for node in range(topology.num_edges + 1):
        on_node = r[nodes == node]
        if not on_node.size:
            continue
        t = model_bits / on_node.min()
        if node != CLOUD:
            t += _backhaul_seconds(loads[node], model_bits,
                                   caps.backhaul_bps[node - 1], inc_enabled)
        worst = max(worst, t)
    return worst
