"""Network, model and compute-time primitives.

Defines the types every other module consumes: the global model's size
arithmetic, node capacities, user profiles with reachability, and the
truncated power-law distribution used for heterogeneous local computing
times.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from fedinc.seeds import rng_for

CLOUD = 0  # node id of the cloud, everywhere


@dataclass(frozen=True)
class ModelSpec:
    """Trained model, as the network sees it: a parameter vector plus one
    appended weight scalar, each encoded with `codeword_bits` bits."""

    params: int
    codeword_bits: int = 32
    size_bits: Optional[int] = None  # explicit override, wins when set

    def __post_init__(self):
        if self.params < 1:
            raise ValueError(f"model params must be >= 1, got {self.params}")
        if self.codeword_bits < 1:
            raise ValueError(f"codeword_bits must be >= 1, got {self.codeword_bits}")
        if self.size_bits is not None and self.size_bits < 1:
            raise ValueError(f"size_bits override must be >= 1, got {self.size_bits}")


def model_size_bits(spec: ModelSpec) -> int:
    """Bits on the wire for one model update: (params + 1) codewords, unless
    an explicit size override is set."""
    if spec.size_bits is not None:
        return int(spec.size_bits)
    return (spec.params + 1) * spec.codeword_bits


@dataclass(frozen=True)
class NodeCapacities:
    """Link capacities, bit/s. Edge arrays are indexed 0..M-1 for edge nodes
    1..M; the cloud keeps its own uplink/downlink shares."""

    fronthaul_bps: np.ndarray
    backhaul_bps: np.ndarray
    cloud_up_bps: float
    cloud_down_bps: float

    def __post_init__(self):
        fr = np.asarray(self.fronthaul_bps, dtype=float)
        bk = np.asarray(self.backhaul_bps, dtype=float)
        object.__setattr__(self, "fronthaul_bps", fr)
        object.__setattr__(self, "backhaul_bps", bk)
        if fr.shape != bk.shape:
            raise ValueError("fronthaul and backhaul capacity arrays must match in length")
        if np.any(fr <= 0) or np.any(bk <= 0):
            raise ValueError("edge capacities must be positive")
        if self.cloud_up_bps <= 0 or self.cloud_down_bps <= 0:
            raise ValueError("cloud capacities must be positive")

    @classmethod
    def uniform(cls, m: int, fronthaul_bps: float, backhaul_bps: float,
                cloud_up_bps: float, cloud_down_bps: float) -> "NodeCapacities":
        return cls(np.full(m, float(fronthaul_bps)), np.full(m, float(backhaul_bps)),
                   float(cloud_up_bps), float(cloud_down_bps))

    @property
    def num_edges(self) -> int:
        return len(self.fronthaul_bps)


@dataclass(frozen=True)
class UserProfile:
    """One participating device. Compute fields feed the cycle-accurate local
    training time; position only matters for coverage."""

    num_samples: int = 1
    cycles_per_sample: float = 1.0
    cpu_hz: float = 1.0
    position: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.cycles_per_sample <= 0 or self.cpu_hz <= 0:
            raise ValueError("cycles_per_sample and cpu_hz must be positive")


def compute_time(profile: UserProfile, local_iterations: int) -> float:
    """Seconds for `local_iterations` passes over the user's samples."""
    if local_iterations < 1:
        raise ValueError("local_iterations must be >= 1")
    return local_iterations * profile.cycles_per_sample * profile.num_samples / profile.cpu_hz


@dataclass
class Topology:
    """Edge-cloud network instance: M edge nodes plus the cloud (node 0),
    K users, and per-user reachability sets that always contain the cloud."""

    area_side_m: float
    edge_positions: np.ndarray  # (M, 2)
    capacities: NodeCapacities
    users: list = field(default_factory=list)
    reachable: list = field(default_factory=list)  # per user frozenset of node ids

    def __post_init__(self):
        self.edge_positions = np.asarray(self.edge_positions, dtype=float).reshape(-1, 2)
        if self.edge_positions.shape[0] != self.capacities.num_edges:
            raise ValueError("edge_positions and capacities disagree on M")
        if len(self.users) != len(self.reachable):
            raise ValueError("users and reachable lists must align")
        for r in self.reachable:
            if CLOUD not in r:
                raise ValueError("every user must reach the cloud (node 0)")
            if any(n < 0 or n > self.num_edges for n in r):
                raise ValueError("reachability set names an unknown node")

    @property
    def num_edges(self) -> int:
        return self.capacities.num_edges

    @property
    def num_users(self) -> int:
        return len(self.users)


class ComputeTimeDist:
    """Truncated power law for local computing times.

    Density proportional to t**(-beta) on [t_min, t_max], renormalized over
    the interval. Sampling is exact inverse-CDF. beta must exceed 1.
    """

    def __init__(self, t_min_s: float, t_max_s: float, beta: float):
        if beta <= 1.0:
            raise ValueError(f"beta must be > 1, got {beta}")
        if t_min_s <= 0:
            raise ValueError(f"t_min_s must be positive, got {t_min_s}")
        if t_max_s < t_min_s:
            raise ValueError("t_max_s must be >= t_min_s")
        self.t_min_s = float(t_min_s)
        self.t_max_s = float(t_max_s)
        self.beta = float(beta)
        # mass of the untruncated tail kept inside [t_min, t_max]
        self._tail = 1.0 - (self.t_max_s / self.t_min_s) ** (1.0 - self.beta)

    def cdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self._tail == 0.0:  # degenerate point mass at t_min
            return (t >= self.t_min_s).astype(float)
        raw = (1.0 - (t / self.t_min_s) ** (1.0 - self.beta)) / self._tail
        return np.clip(raw, 0.0, 1.0)

    def inv_cdf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise ValueError("inv_cdf argument must lie in [0, 1]")
        if self._tail == 0.0:
            return np.full_like(u, self.t_min_s)
        t = self.t_min_s * (1.0 - u * self._tail) ** (1.0 / (1.0 - self.beta))
        return np.clip(t, self.t_min_s, self.t_max_s)


def sample_compute_times(dist: ComputeTimeDist, k: int, seed) -> np.ndarray:
    """Draw k compute times by inverse-CDF over a seeded uniform stream."""
    if k < 1:
        raise ValueError("need at least one user to sample for")
    rng = np.random.default_rng(seed)
    return dist.inv_cdf(rng.random(k))


def _as_grid(grid_rows_cols) -> tuple:
    if isinstance(grid_rows_cols, (int, np.integer)):
        return int(grid_rows_cols), int(grid_rows_cols)
    rows, cols = grid_rows_cols
    return int(rows), int(cols)


def build_grid_topology(area_side_m: float, grid_rows_cols, k: int,
                        coverage_radius_m: float, capacities,
                        seed: int = 0) -> Topology:
    """Square deployment area with edge nodes on a regular grid.

    Users are placed uniformly at random inside the union of the edge
    coverage disks (uniformly over the whole square when there are no
    edges), and reach the cloud plus every edge within coverage_radius_m.
    Deterministic for a fixed seed.
    """
    if area_side_m <= 0:
        raise ValueError("area_side_m must be positive")
    if k < 1:
        raise ValueError("K must be >= 1")
    rows, cols = _as_grid(grid_rows_cols)
    if rows < 0 or cols < 0:
        raise ValueError("grid_rows_cols must be nonnegative")
    m = rows * cols

    if isinstance(capacities, NodeCapacities):
        caps = capacities
    else:
        caps = NodeCapacities.uniform(m, capacities["fronthaul_bps"],
                                      capacities["backhaul_bps"],
                                      capacities["cloud_up_bps"],
                                      capacities["cloud_down_bps"])
    if caps.num_edges != m:
        raise ValueError(f"capacities sized for {caps.num_edges} edges, grid has {m}")
    if m > 0 and coverage_radius_m <= 0:
        raise ValueError("coverage_radius_m must be positive when edges exist")

    # cell centers, row-major, edge ids 1..M in that order
    xs = (np.arange(cols) + 0.5) * area_side_m / max(cols, 1)
    ys = (np.arange(rows) + 0.5) * area_side_m / max(rows, 1)
    positions = np.array([(x, y) for y in ys for x in xs], dtype=float).reshape(m, 2)

    rng = rng_for(seed, "grid-topology")
    pts = np.empty((k, 2))
    filled = 0
    while filled < k:
        batch = rng.random((max(4 * (k - filled), 64), 2)) * area_side_m
        if m > 0:
            d2 = ((batch[:, None, :] - positions[None, :, :]) ** 2).sum(axis=2)
            keep = batch[(d2 <= coverage_radius_m ** 2).any(axis=1)]
        else:
            keep = batch
        take = min(len(keep), k - filled)
        pts[filled:filled + take] = keep[:take]
        filled += take

    users, reach = [], []
    for i in range(k):
        users.append(UserProfile(position=(float(pts[i, 0]), float(pts[i, 1]))))
        nodes = {CLOUD}
        if m > 0:
            d2 = ((positions - pts[i]) ** 2).sum(axis=1)
            nodes |= {int(j) + 1 for j in np.flatnonzero(d2 <= coverage_radius_m ** 2)}
        reach.append(frozenset(nodes))

    return Topology(area_side_m=float(area_side_m), edge_positions=positions,
                    capacities=caps, users=users, reachable=reach)
