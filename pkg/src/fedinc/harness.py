"""Experiment harness: topology + schedule + routing into CSV rows.

One result row per (K, model size, routing mode) point. Rows carry enough
columns to recompute the total: for the bipartition scheme
T_total = max(t_start_p1 + T_up_p1, T_down + T_cp_max) + T_up_p2, and for
the other schemes T_total = T_down + T_cp_max + T_up. All floats are
written with 9 significant digits, comma separated, LF line endings, so a
rerun with the same config and seed reproduces the files byte for byte.

The straggler side model: a round fails when the cloud link and all v
alternative edge paths fail together, P = p_cloud * p_edge^v; analytic
values are emitted next to seeded Monte Carlo frequencies.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from fedinc import _kernels
from fedinc.aggregation import (LocalMessage, cloud_load_metrics, cloud_merge,
                                edge_aggregate, flat_aggregate, global_update,
                                pack_message)
from fedinc.config import ExperimentConfig, load_config
from fedinc.latency import Assignment, downlink_latency, evaluate_assignment
from fedinc.model import (CLOUD, ComputeTimeDist, NodeCapacities, Topology,
                          UserProfile, build_grid_topology, sample_compute_times)
from fedinc.routing import (approx_bound, brute_force_optimal, node_cost_arrays,
                            only_cloud_uplink, randomized_round, solve_lp)
from fedinc.scheduling import (aggregate_all_schedule, bipartition_schedule,
                               sequential_schedule)
from fedinc.seeds import child_seed, rng_for

RESULT_COLUMNS = ["experiment", "K", "model_bits", "scheme", "mode", "seed",
                  "T_down_s", "T_cp_max_s", "t_start_p1_s", "T_up_p1_s",
                  "T_up_p2_s", "T_up_s", "T_total_s", "lp_lower_bound_s",
                  "approx_bound_ratio", "cloud_rx_models", "cloud_rx_bytes"]
STRAGGLER_COLUMNS = ["experiment", "p_cloud", "p_edge", "v", "mc_trials",
                     "analytic_p", "mc_freq", "seed"]


def straggler_probability(p_cloud: float, p_edge: float, v: int) -> float:
    """Chance that a round loses a user entirely: the cloud path and all v
    edge alternatives must fail at once."""
    for name, p in (("p_cloud", p_cloud), ("p_edge", p_edge)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {p}")
    if v < 0:
        raise ValueError(f"v must be nonnegative, got {v}")
    return p_cloud * p_edge ** v


def simulate_straggler_outages(p_cloud: float, p_edge: float, v: int,
                               trials: int, seed) -> float:
    """Monte Carlo outage frequency over independent link failures."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.random((trials, v + 1))
    outage = (u[:, 0] < p_cloud) & np.all(u[:, 1:] < p_edge, axis=1)
    return float(outage.mean())


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    return str(value)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")


@dataclass
class _RouteOutcome:
    uplink_s: float
    lower_bound_s: Optional[float]
    assignment: Optional[Assignment]


class _Router:
    """Per-point routing callback with memoized per-partition outcomes."""

    def __init__(self, cfg: ExperimentConfig, topology: Topology,
                 model_bits: int, k: int, size_bits: int, mode: str):
        self.cfg = cfg
        self.topology = topology
        self.model_bits = model_bits
        self.k = k
        self.size_key = size_bits
        self.mode = mode
        self.cache: dict = {}

    def outcome(self, rows: np.ndarray) -> _RouteOutcome:
        key = tuple(rows.tolist())
        if key in self.cache:
            return self.cache[key]
        out = self._route(rows)
        self.cache[key] = out
        return out

    def uplink(self, rows: np.ndarray) -> float:
        if rows.size == 0:
            return 0.0
        return self.outcome(rows).uplink_s

    def _route(self, rows: np.ndarray) -> _RouteOutcome:
        topo, bits = self.topology, self.model_bits
        if self.mode == "only_cloud":
            assignment = Assignment.from_nodes(
                np.zeros(rows.size, dtype=np.int64), topo.num_edges, user_ids=rows)
            return _RouteOutcome(
                only_cloud_uplink(rows.size, bits, topo.capacities.cloud_up_bps),
                None, assignment)
        if self.mode in ("inc_lb", "non_inc_lb"):
            lp = solve_lp(topo, bits, "inc" if self.mode == "inc_lb" else "non_inc",
                          user_ids=rows)
            return _RouteOutcome(lp.y_s, lp.y_s, None)
        if self.mode == "inc_alg":
            lp = solve_lp(topo, bits, "inc", user_ids=rows)
            tag = zlib.crc32(rows.tobytes())
            best = None
            for trial in range(self.cfg.trials):
                seed = child_seed(self.cfg.seed, "round", self.k, self.size_key,
                                  tag, trial)
                assignment = randomized_round(lp, seed)
                realized = evaluate_assignment(assignment, topo, bits,
                                               inc_enabled=True).uplink_s
                if best is None or realized < best.uplink_s:
                    best = _RouteOutcome(realized, lp.y_s, assignment)
            return best
        raise ValueError(f"unknown routing mode {self.mode!r}")


def _point_row(cfg: ExperimentConfig, topology: Topology, times: np.ndarray,
               dist: ComputeTimeDist, k: int, size_bits, mode: str) -> dict:
    model_bits = cfg.model_bits_for(size_bits)
    down = downlink_latency(model_bits, cfg.cloud_down_bps)
    router = _Router(cfg, topology, model_bits, k, size_bits or 0, mode)

    if cfg.scheme == "aggregate_all":
        sched = aggregate_all_schedule(times, down, router.uplink, cfg.epsilon0)
    elif cfg.scheme == "sequential":
        upload = model_bits / cfg.cloud_up_bps
        sched = sequential_schedule(times, down, upload)
    else:
        if cfg.delta_t_s is not None:
            delta_t = cfg.delta_t_s
        else:
            delta_t = float(dist.inv_cdf(cfg.quantile)) - dist.t_min_s
        sched = bipartition_schedule(times, delta_t, down, router.uplink, cfg.epsilon0)

    if cfg.scheme == "bipartition":
        fast, slow = sched.partitions
        up1, up2 = sched.partition_uplink_s
        t_start_p1 = sched.partition_start_s[0]
        parts = [p for p in (fast, slow) if p.size]
    else:
        everyone = np.arange(k, dtype=np.int64)
        up1, up2 = sched.partition_uplink_s[0], 0.0
        t_start_p1 = sched.partition_start_s[0]
        parts = [everyone]

    lower = None
    ratio = None
    models = bytes_rx = None
    if mode in ("inc_lb", "non_inc_lb", "inc_alg"):
        lower = sum(router.outcome(p).lower_bound_s for p in parts)
    if mode == "inc_alg":
        ratio = approx_bound(k, lower)[0]
        models = 0
        for p in parts:
            part_models, _ = cloud_load_metrics(router.outcome(p).assignment,
                                                model_bits, ina_enabled=True)
            models += part_models
        bytes_rx = models * model_bits / 8.0
    elif mode in ("only_cloud", "non_inc_lb"):
        models = k
        bytes_rx = k * model_bits / 8.0

    return {
        "experiment": cfg.experiment, "K": k, "model_bits": model_bits,
        "scheme": cfg.scheme, "mode": mode, "seed": cfg.seed,
        "T_down_s": down, "T_cp_max_s": sched.compute_max_s,
        "t_start_p1_s": t_start_p1, "T_up_p1_s": up1, "T_up_p2_s": up2,
        "T_up_s": up1 + up2, "T_total_s": sched.total_s,
        "lp_lower_bound_s": lower, "approx_bound_ratio": ratio,
        "cloud_rx_models": models,
        "cloud_rx_bytes": int(bytes_rx) if bytes_rx is not None else None,
    }


def _thread_count() -> int:
    env = os.environ.get("FEDINC_THREADS", "")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def compute_rows(cfg: ExperimentConfig) -> tuple:
    """All result and straggler rows for a config, in deterministic order."""
    dist = ComputeTimeDist(cfg.t_min_s, cfg.t_max_s, cfg.beta)
    caps = {"fronthaul_bps": cfg.fronthaul_bps, "backhaul_bps": cfg.backhaul_bps,
            "cloud_up_bps": cfg.cloud_up_bps, "cloud_down_bps": cfg.cloud_down_bps}

    shared = {}
    for k in cfg.k_values:
        if k in shared:
            continue
        topology = build_grid_topology(cfg.area_m, cfg.grid, k, cfg.radius_m,
                                       caps, seed=child_seed(cfg.seed, "topology", k))
        times = sample_compute_times(dist, k, child_seed(cfg.seed, "compute", k))
        shared[k] = (topology, times)

    points = [(k, size, mode) for k in cfg.k_values
              for size in cfg.size_bits_values for mode in cfg.modes]

    def solve_point(point):
        k, size, mode = point
        topology, times = shared[k]
        return _point_row(cfg, topology, times, dist, k, size, mode)

    workers = _thread_count()
    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(solve_point, points))
    else:
        rows = [solve_point(p) for p in points]

    straggler_rows = []
    if cfg.straggler is not None:
        st = cfg.straggler
        for p_edge in st.p_edge_values:
            for v in st.v_values:
                seed = child_seed(cfg.seed, "straggler", format(p_edge, ".9g"), v)
                straggler_rows.append({
                    "experiment": cfg.experiment, "p_cloud": st.p_cloud,
                    "p_edge": p_edge, "v": v, "mc_trials": st.mc_trials,
                    "analytic_p": straggler_probability(st.p_cloud, p_edge, v),
                    "mc_freq": simulate_straggler_outages(st.p_cloud, p_edge, v,
                                                          st.mc_trials, seed),
                    "seed": cfg.seed,
                })
    return rows, straggler_rows


def run_experiment(cfg: ExperimentConfig, out_dir, seed_override=None) -> dict:
    """Run a config and write results.csv (and straggler.csv) under out_dir."""
    if seed_override is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "seed": int(seed_override)})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, straggler_rows = compute_rows(cfg)
    paths = {"results": out / "results.csv"}
    write_csv(paths["results"], RESULT_COLUMNS, rows)
    if straggler_rows:
        paths["straggler"] = out / "straggler.csv"
        write_csv(paths["straggler"], STRAGGLER_COLUMNS, straggler_rows)
    return {"paths": paths, "rows": rows, "straggler_rows": straggler_rows}


FIGURES = ("fig4", "fig5", "fig6", "fig7")
LONG_COLUMNS = ["figure", "series", "x", "y", "kind"]


def figure_rows(cfg: ExperimentConfig, rows, straggler_rows) -> list:
    """Reshape harness rows into long-format plotting data."""
    fig = cfg.experiment
    out = []
    if fig == "fig4":
        for r in rows:
            out.append({"figure": fig, "series": r["mode"], "x": r["K"],
                        "y": r["T_total_s"], "kind": "total_latency_s"})
    elif fig == "fig5":
        for r in rows:
            out.append({"figure": fig, "series": r["mode"],
                        "x": r["model_bits"] / 8e6, "y": r["T_total_s"],
                        "kind": "total_latency_s"})
    elif fig == "fig6":
        for r in rows:
            if r["cloud_rx_bytes"] is not None:
                out.append({"figure": fig, "series": r["mode"], "x": r["K"],
                            "y": r["cloud_rx_bytes"], "kind": "cloud_rx_bytes"})
    elif fig == "fig7":
        for r in straggler_rows:
            series = f"p_edge={_fmt(r['p_edge'])}"
            out.append({"figure": fig, "series": series, "x": r["v"],
                        "y": r["analytic_p"], "kind": "analytic"})
            out.append({"figure": fig, "series": series, "x": r["v"],
                        "y": r["mc_freq"], "kind": "simulated"})
    else:
        raise ValueError(f"experiment {fig!r} is not a figure id; expected one of {FIGURES}")
    return out


# ---------------------------------------------------------------------------
# verification suites (CLI `verify`)
# ---------------------------------------------------------------------------

def _random_merge_instance(rng):
    k = int(rng.integers(1, 61))
    dim = int(rng.integers(1, 33))
    m = int(rng.integers(0, 9))
    weights = np.where(rng.random(k) < 0.5,
                       rng.integers(1, 50, size=k).astype(float),
                       np.exp(rng.normal(size=k)))
    payloads = rng.normal(size=(k, dim))
    nodes = rng.integers(0, m + 1, size=k)
    return weights, payloads, nodes, m


def grouped_vs_flat(weights, payloads, nodes, m, carry, psi):
    packets = [LocalMessage(weight=float(w), values=payloads[i])
               for i, w in enumerate(weights)]
    flat = flat_aggregate(carry, psi, packets)
    direct = [p for p, node in zip(packets, nodes) if node == CLOUD]
    edge_msgs = [edge_aggregate([p for p, node in zip(packets, nodes) if node == em])
                 for em in range(1, m + 1)
                 if any(node == em for node in nodes)]
    grouped = global_update(carry, psi, [cloud_merge(direct, edge_msgs)])
    return flat, grouped, packets, edge_msgs


def verify_suites(seed: int = 2026, out_dir=None) -> list:
    """Deterministic oracle suites behind the `verify` subcommand.

    Returns (name, ok, detail) triples; writes a binary packet trace when
    out_dir is given.
    """
    results = []

    rng = rng_for(seed, "verify", "grouping")
    worst = 0.0
    ok = True
    trace_msgs = []
    for i in range(200):
        weights, payloads, nodes, m = _random_merge_instance(rng)
        carry = float(rng.random())
        psi = rng.normal(size=payloads.shape[1])
        flat, grouped, packets, edge_msgs = grouped_vs_flat(
            weights, payloads, nodes, m, carry, psi)
        diff = float(np.max(np.abs(flat - grouped))) if flat.size else 0.0
        worst = max(worst, diff)
        if not np.array_equal(flat, grouped):
            ok = False
        if i == 0:
            trace_msgs = packets[:3] + edge_msgs[:2]
    results.append(("grouping-equivalence", ok,
                    f"200 instances, max |flat - grouped| = {worst:.3e}"))

    rng = rng_for(seed, "verify", "sandwich")
    ok = True
    detail = ""
    gaps = []
    for i in range(30):
        topo, bits = _random_small_topology(rng)
        lp_inc = solve_lp(topo, bits, "inc")
        lp_non = solve_lp(topo, bits, "non_inc")
        if lp_inc.y_s > lp_non.y_s + 1e-9:
            ok, detail = False, f"instance {i}: inc bound above non-inc bound"
            break
        for mode, lp in (("inc", lp_inc), ("non_inc", lp_non)):
            _, best = brute_force_optimal(topo, bits, mode)
            rounded = evaluate_assignment(
                randomized_round(lp, child_seed(seed, "verify-round", i, mode)),
                topo, bits, inc_enabled=mode == "inc").uplink_s
            if not (lp.y_s <= best + 1e-9 and best <= rounded + 1e-9):
                ok, detail = False, f"instance {i} ({mode}): sandwich violated"
                break
            gaps.append(rounded - lp.y_s)
        if not ok:
            break
    if ok:
        detail = f"30 instances, mean rounding gap {np.mean(gaps):.4f} s"
    results.append(("lp-ilp-rounding-sandwich", ok, detail))

    rng = rng_for(seed, "verify", "round-bound")
    k = 100
    caps = {"fronthaul_bps": 1e9, "backhaul_bps": 1e9,
            "cloud_up_bps": 2e9, "cloud_down_bps": 2e9}
    topo = build_grid_topology(500.0, (3, 3), k, 150.0, caps,
                               seed=child_seed(seed, "verify-topo"))
    bits = int(232 * 8e6)
    lp = solve_lp(topo, bits, "inc")
    ratio, assumption = approx_bound(k, lp.y_s)
    cum = np.cumsum(lp.fractions, axis=1)
    cum /= cum[:, -1:]
    unit_cost, bk_unit, bk_cap = node_cost_arrays(topo, bits, True)
    uniforms = rng.random((300, k))
    lat, _ = _kernels.round_and_eval(cum, uniforms, unit_cost, bk_unit, bk_cap)
    freq = float(np.mean(lat <= ratio * lp.y_s + 1e-9))
    ok = freq >= 1.0 - 1.0 / k and assumption
    results.append(("rounding-approximation-bound", ok,
                    f"K=100, 300 roundings, within-bound frequency {freq:.4f}, "
                    f"ratio {ratio:.3f}"))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "trace.bin", "wb") as fh:
            for msg in trace_msgs:
                fh.write(pack_message(msg))
    return results


def _random_small_topology(rng):
    m = int(rng.integers(0, 3))
    k = int(rng.integers(1, 9))
    caps = NodeCapacities(
        fronthaul_bps=rng.uniform(0.5e9, 4e9, size=m),
        backhaul_bps=rng.uniform(0.5e9, 4e9, size=m),
        cloud_up_bps=float(rng.uniform(1e9, 4e9)),
        cloud_down_bps=float(rng.uniform(1e9, 4e9)))
    reach = []
    for _ in range(k):
        extra = {int(e) + 1 for e in range(m) if rng.random() < 0.6}
        reach.append(frozenset({CLOUD} | extra))
    users = [UserProfile() for _ in range(k)]
    topo = Topology(area_side_m=1.0, edge_positions=np.zeros((m, 2)),
                    capacities=caps, users=users, reachable=reach)
    bits = int(rng.uniform(1e8, 2e9))
    return topo, bits
