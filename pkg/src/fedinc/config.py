"""Experiment configuration: flat YAML in, validated plain values out.

Link rates are given in Gbps and model sizes in MB; both convert decimally
(1 Gbps = 1e9 bit/s, 1 MB = 8e6 bits). Fields that drive sweeps (topology.K,
model.size_mb, routing.mode, straggler.v, straggler.p_edge) accept a scalar
or a list.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import yaml

GBPS = 1e9
MB_BITS = 8e6

SCHEMES = ("aggregate_all", "sequential", "bipartition")
ROUTING_MODES = ("only_cloud", "non_inc_lb", "inc_alg", "inc_lb")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field path."""


def _require(mapping, path, key):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path}: expected a mapping")
    if key not in mapping:
        raise ConfigError(f"{path}.{key}: required field is missing")
    return mapping[key]


def _number(value, path, positive=True):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{path}: must be positive, got {value}")
    return float(value)


def _integer(value, path, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {value}")
    return value


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


@dataclass
class StragglerConfig:
    p_cloud: float
    p_edge_values: list
    v_values: list
    mc_trials: int


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    area_m: float
    grid: tuple
    k_values: list
    radius_m: float
    fronthaul_bps: float
    backhaul_bps: float
    cloud_up_bps: float
    cloud_down_bps: float
    model_params: int
    codeword_bits: int
    size_bits_values: list          # one entry per swept size; [None] = no override
    t_min_s: float
    t_max_s: float
    beta: float
    scheme: str
    delta_t_s: Optional[float]
    quantile: float
    epsilon0: float
    modes: list
    trials: int
    straggler: Optional[StragglerConfig] = None

    def model_bits_for(self, size_bits) -> int:
        if size_bits is not None:
            return int(size_bits)
        return (self.model_params + 1) * self.codeword_bits


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a mapping")

    experiment = raw.get("experiment", "experiment")
    if not isinstance(experiment, str) or not experiment:
        raise ConfigError("experiment: expected a nonempty string")
    seed = _integer(raw.get("seed", 0), "seed", minimum=0)

    topo = _require(raw, "top level", "topology")
    area_m = _number(_require(topo, "topology", "area_m"), "topology.area_m")
    grid_raw = _require(topo, "topology", "grid")
    if isinstance(grid_raw, int) and not isinstance(grid_raw, bool):
        grid = (grid_raw, grid_raw)
    elif isinstance(grid_raw, (list, tuple)) and len(grid_raw) == 2:
        grid = (_integer(grid_raw[0], "topology.grid[0]", minimum=0),
                _integer(grid_raw[1], "topology.grid[1]", minimum=0))
    else:
        raise ConfigError("topology.grid: expected an int or a [rows, cols] pair")
    k_values = [_integer(k, "topology.K") for k in _as_list(_require(topo, "topology", "K"))]
    num_edges = grid[0] * grid[1]
    radius_m = _number(topo.get("radius_m", 0.0), "topology.radius_m", positive=False)
    if num_edges > 0 and radius_m <= 0:
        raise ConfigError("topology.radius_m: must be positive when the grid has edges")
    caps = _require(topo, "topology", "capacities")
    fronthaul = _number(_require(caps, "topology.capacities", "fronthaul_gbps"),
                        "topology.capacities.fronthaul_gbps") * GBPS
    backhaul = _number(_require(caps, "topology.capacities", "backhaul_gbps"),
                       "topology.capacities.backhaul_gbps") * GBPS
    cloud_up = _number(_require(caps, "topology.capacities", "cloud_up_gbps"),
                       "topology.capacities.cloud_up_gbps") * GBPS
    cloud_down = _number(_require(caps, "topology.capacities", "cloud_down_gbps"),
                         "topology.capacities.cloud_down_gbps") * GBPS

    model = _require(raw, "top level", "model")
    params = _integer(_require(model, "model", "params"), "model.params")
    codeword = _integer(model.get("codeword_bits", 32), "model.codeword_bits")
    if "size_mb" in model:
        sizes = [int(_number(s, "model.size_mb") * MB_BITS)
                 for s in _as_list(model["size_mb"])]
        size_bits_values = sizes
    else:
        size_bits_values = [None]

    comp = _require(raw, "top level", "compute")
    t_min = _number(_require(comp, "compute", "t_min_s"), "compute.t_min_s")
    t_max = _number(_require(comp, "compute", "t_max_s"), "compute.t_max_s")
    if t_max < t_min:
        raise ConfigError("compute.t_max_s: must be >= compute.t_min_s")
    beta = _number(_require(comp, "compute", "beta"), "compute.beta")
    if beta <= 1:
        raise ConfigError("compute.beta: must be > 1")

    sched = _require(raw, "top level", "schedule")
    scheme = _require(sched, "schedule", "scheme")
    if scheme not in SCHEMES:
        raise ConfigError(f"schedule.scheme: expected one of {SCHEMES}, got {scheme!r}")
    delta_t = None
    if "delta_t_s" in sched:
        delta_t = _number(sched["delta_t_s"], "schedule.delta_t_s", positive=False)
        if delta_t < 0:
            raise ConfigError("schedule.delta_t_s: must be nonnegative")
    quantile = _number(sched.get("quantile", 0.8), "schedule.quantile")
    if not 0 < quantile < 1:
        raise ConfigError("schedule.quantile: must lie in (0, 1)")
    epsilon0 = _number(sched.get("epsilon0", 0.5), "schedule.epsilon0")

    routing = _require(raw, "top level", "routing")
    modes = _as_list(_require(routing, "routing", "mode"))
    for mode in modes:
        if mode not in ROUTING_MODES:
            raise ConfigError(f"routing.mode: expected one of {ROUTING_MODES}, got {mode!r}")
    trials = _integer(routing.get("trials", 1), "routing.trials")
    if scheme == "sequential" and any(m != "only_cloud" for m in modes):
        raise ConfigError("schedule.scheme: sequential uploads go straight to the "
                          "cloud; use routing.mode only_cloud")

    straggler = None
    if "straggler" in raw:
        st = raw["straggler"]
        p_cloud = _number(_require(st, "straggler", "p_cloud"), "straggler.p_cloud",
                          positive=False)
        p_edges = [_number(p, "straggler.p_edge", positive=False)
                   for p in _as_list(_require(st, "straggler", "p_edge"))]
        for p in [p_cloud] + p_edges:
            if not 0 <= p <= 1:
                raise ConfigError("straggler probabilities must lie in [0, 1]")
        v_values = [_integer(v, "straggler.v", minimum=0)
                    for v in _as_list(_require(st, "straggler", "v"))]
        mc = _integer(st.get("mc_trials", 100000), "straggler.mc_trials")
        straggler = StragglerConfig(p_cloud, p_edges, v_values, mc)

    return ExperimentConfig(
        experiment=experiment, seed=seed, area_m=area_m, grid=grid,
        k_values=k_values, radius_m=radius_m, fronthaul_bps=fronthaul,
        backhaul_bps=backhaul, cloud_up_bps=cloud_up, cloud_down_bps=cloud_down,
        model_params=params, codeword_bits=codeword,
        size_bits_values=size_bits_values, t_min_s=t_min, t_max_s=t_max,
        beta=beta, scheme=scheme, delta_t_s=delta_t, quantile=quantile,
        epsilon0=epsilon0, modes=modes, trials=trials, straggler=straggler)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if raw is None:
        raise ConfigError(f"{path}: empty config file")
    return parse_config(raw)


def apply_override(raw: dict, dotted_param: str, value):
    """Set a dotted path like topology.K in a raw config mapping."""
    parts = dotted_param.split(".")
    node = raw
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"{dotted_param}: no such config section {p!r}")
        node = node[p]
    if not isinstance(node, dict):
        raise ConfigError(f"{dotted_param}: parent is not a mapping")
    node[parts[-1]] = value
    return raw
