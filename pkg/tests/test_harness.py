"""Harness end to end: config parsing, row production, CSV replay, CLI."""

import math

import numpy as np
import pytest
import yaml

from fedinc import cli, harness
from fedinc.config import (ConfigError, ExperimentConfig, apply_override,
                           load_config, parse_config)
from fedinc.harness import (LONG_COLUMNS, RESULT_COLUMNS, STRAGGLER_COLUMNS,
                            compute_rows, figure_rows, run_experiment,
                            simulate_straggler_outages, straggler_probability,
                            verify_suites, write_csv)
from fedinc.seeds import child_seed

UP_PER_USER = 1_856_000_000 / 2e9  # 0.928 s


def raw_config(**over):
    raw = {
        "experiment": "fig4",
        "seed": 7,
        "topology": {
            "area_m": 500.0, "grid": 3, "K": [8, 12], "radius_m": 150.0,
            "capacities": {"fronthaul_gbps": 10.0, "backhaul_gbps": 1.0,
                           "cloud_up_gbps": 2.0, "cloud_down_gbps": 2.0},
        },
        "model": {"params": 57_999_999, "codeword_bits": 32},
        "compute": {"t_min_s": 0.2, "t_max_s": 80.0, "beta": 1.55},
        "schedule": {"scheme": "bipartition", "delta_t_s": 2.8},
        "routing": {"mode": ["only_cloud", "non_inc_lb", "inc_alg", "inc_lb"],
                    "trials": 2},
        "straggler": {"p_cloud": 0.3, "p_edge": [0.5], "v": [0, 2],
                      "mc_trials": 5000},
    }
    for key, value in over.items():
        if value is None:
            raw.pop(key, None)
        elif isinstance(value, dict) and isinstance(raw.get(key), dict):
            raw[key].update(value)
        else:
            raw[key] = value
    return raw


@pytest.fixture(scope="module")
def small_run():
    cfg = parse_config(raw_config())
    rows, straggler_rows = compute_rows(cfg)
    return cfg, rows, straggler_rows


# -- straggler probabilities -------------------------------------------------

def test_straggler_worked_values():
    assert straggler_probability(0.3, 0.5, 2) == 0.075
    assert straggler_probability(0.3, 0.5, 0) == 0.3
    assert straggler_probability(0.3, 0.5, 0) / straggler_probability(0.3, 0.5, 2) == 4.0
    p = straggler_probability(0.3, 0.3, 2)
    assert p == pytest.approx(0.027, rel=1e-12)
    assert 0.3 / p == pytest.approx(100 / 9, rel=1e-12)


def test_straggler_validation():
    with pytest.raises(ValueError, match="p_cloud"):
        straggler_probability(1.2, 0.5, 1)
    with pytest.raises(ValueError, match="p_edge"):
        straggler_probability(0.5, -0.1, 1)
    with pytest.raises(ValueError, match="v"):
        straggler_probability(0.5, 0.5, -1)
    with pytest.raises(ValueError):
        simulate_straggler_outages(0.3, 0.5, 2, 0, seed=1)


def test_straggler_monte_carlo_within_three_sigma():
    p = 0.075
    n = 100_000
    freq = simulate_straggler_outages(0.3, 0.5, 2, n, seed=424242)
    assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / n)
    again = simulate_straggler_outages(0.3, 0.5, 2, n, seed=424242)
    assert freq == again


# -- CSV formatting ----------------------------------------------------------

def test_write_csv_formatting(tmp_path):
    path = tmp_path / "t.csv"
    rows = [{"a": 1, "b": 0.30000000000000004, "c": None, "d": "x"},
            {"a": np.int64(7), "b": np.float64(544.9280000001), "c": 0.5, "d": ""}]
    write_csv(path, ["a", "b", "c", "d"], rows)
    data = path.read_bytes()
    assert data == b"a,b,c,d\n1,0.3,,x\n7,544.928,0.5,\n"


# -- config parsing ----------------------------------------------------------

def test_parse_config_happy_path():
    cfg = parse_config(raw_config())
    assert cfg.experiment == "fig4" and cfg.seed == 7
    assert cfg.grid == (3, 3) and cfg.k_values == [8, 12]
    assert cfg.fronthaul_bps == 10e9 and cfg.cloud_up_bps == 2e9
    assert cfg.model_bits_for(None) == 1_856_000_000
    assert cfg.size_bits_values == [None]
    assert cfg.delta_t_s == 2.8
    assert cfg.modes == ["only_cloud", "non_inc_lb", "inc_alg", "inc_lb"]
    assert cfg.straggler.mc_trials == 5000


def test_parse_config_defaults():
    raw = raw_config()
    del raw["experiment"], raw["seed"], raw["straggler"]
    del raw["schedule"]["delta_t_s"]
    raw["routing"] = {"mode": "inc_lb"}
    raw["model"] = {"params": 100}
    cfg = parse_config(raw)
    assert cfg.experiment == "experiment" and cfg.seed == 0
    assert cfg.trials == 1 and cfg.straggler is None
    assert cfg.delta_t_s is None and cfg.quantile == 0.8 and cfg.epsilon0 == 0.5
    assert cfg.modes == ["inc_lb"]
    assert cfg.model_bits_for(None) == 101 * 32


def test_parse_config_size_override_and_grid_pair():
    raw = raw_config(model={"params": 10, "size_mb": [33, 232]},
                     topology={"grid": [2, 3]})
    cfg = parse_config(raw)
    assert cfg.size_bits_values == [int(33 * 8e6), int(232 * 8e6)]
    assert cfg.grid == (2, 3)
    assert cfg.model_bits_for(cfg.size_bits_values[1]) == 1_856_000_000
    scalar = parse_config(raw_config(model={"params": 10, "size_mb": 88}))
    assert scalar.size_bits_values == [int(88 * 8e6)]


@pytest.mark.parametrize("mutate,fragment", [
    (lambda r: r.pop("topology"), "topology"),
    (lambda r: r["topology"].pop("K"), "topology.K"),
    (lambda r: r["topology"]["capacities"].pop("backhaul_gbps"), "backhaul_gbps"),
    (lambda r: r["compute"].__setitem__("beta", 1.0), "beta"),
    (lambda r: r["compute"].__setitem__("t_max_s", 0.1), "t_max_s"),
    (lambda r: r["schedule"].__setitem__("scheme", "pipelined"), "scheme"),
    (lambda r: r["schedule"].__setitem__("delta_t_s", -1.0), "delta_t_s"),
    (lambda r: r["schedule"].__setitem__("quantile", 1.5), "quantile"),
    (lambda r: r["routing"].__setitem__("mode", "fastest"), "routing.mode"),
    (lambda r: r["straggler"].__setitem__("p_cloud", 1.5), "probabilities"),
    (lambda r: r["topology"].__setitem__("grid", [1, 2, 3]), "grid"),
    (lambda r: r["topology"].__setitem__("radius_m", 0.0), "radius_m"),
])
def test_parse_config_rejects(mutate, fragment):
    raw = raw_config()
    mutate(raw)
    with pytest.raises(ConfigError, match=fragment):
        parse_config(raw)


def test_sequential_scheme_requires_cloud_mode():
    raw = raw_config(schedule={"scheme": "sequential"})
    with pytest.raises(ConfigError, match="sequential"):
        parse_config(raw)
    raw["routing"] = {"mode": "only_cloud"}
    assert parse_config(raw).scheme == "sequential"


def test_load_config_errors(tmp_path):
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    with pytest.raises(ConfigError, match="empty"):
        load_config(empty)
    bad = tmp_path / "bad.yaml"
    bad.write_text("topology: [unclosed\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(bad)


def test_apply_override_paths():
    raw = raw_config()
    apply_override(raw, "topology.K", 99)
    assert raw["topology"]["K"] == 99
    apply_override(raw, "seed", 5)
    assert raw["seed"] == 5
    with pytest.raises(ConfigError, match="no such"):
        apply_override(raw, "nosuch.key", 1)


# -- seed derivation ---------------------------------------------------------

def test_child_seed_stable_and_distinct():
    a = np.random.default_rng(child_seed(7, "topology", 8)).integers(0, 1 << 30)
    b = np.random.default_rng(child_seed(7, "topology", 8)).integers(0, 1 << 30)
    c = np.random.default_rng(child_seed(7, "topology", 12)).integers(0, 1 << 30)
    d = np.random.default_rng(child_seed(7, "compute", 8)).integers(0, 1 << 30)
    assert a == b
    assert len({int(a), int(c), int(d)}) == 3


# -- row production ----------------------------------------------------------

def test_compute_rows_shape_and_order(small_run):
    cfg, rows, straggler_rows = small_run
    assert len(rows) == len(cfg.k_values) * len(cfg.modes)
    expect = [(k, mode) for k in cfg.k_values for mode in cfg.modes]
    assert [(r["K"], r["mode"]) for r in rows] == expect
    assert all(set(r) == set(RESULT_COLUMNS) for r in rows)
    assert len(straggler_rows) == 2
    assert all(set(r) == set(STRAGGLER_COLUMNS) for r in straggler_rows)


def test_only_cloud_uplink_scales_with_k(small_run):
    _, rows, _ = small_run
    for r in rows:
        if r["mode"] == "only_cloud":
            assert r["T_up_s"] == pytest.approx(r["K"] * UP_PER_USER, rel=1e-12)
            assert r["cloud_rx_models"] == r["K"]
            assert r["cloud_rx_bytes"] == r["K"] * 232_000_000


def test_mode_ordering_invariant(small_run):
    cfg, rows, _ = small_run
    for k in cfg.k_values:
        by_mode = {r["mode"]: r for r in rows if r["K"] == k}
        assert by_mode["inc_lb"]["T_up_s"] <= by_mode["non_inc_lb"]["T_up_s"] + 1e-9
        assert by_mode["non_inc_lb"]["T_up_s"] <= by_mode["only_cloud"]["T_up_s"] + 1e-9
        alg = by_mode["inc_alg"]
        assert alg["lp_lower_bound_s"] <= alg["T_up_s"] + 1e-9
        assert alg["T_up_s"] <= alg["approx_bound_ratio"] * alg["lp_lower_bound_s"] + 1e-9
        assert alg["cloud_rx_bytes"] <= by_mode["non_inc_lb"]["cloud_rx_bytes"]


def test_totals_recomputable(small_run):
    _, rows, _ = small_run
    for r in rows:
        expect = max(r["t_start_p1_s"] + r["T_up_p1_s"],
                     r["T_down_s"] + r["T_cp_max_s"]) + r["T_up_p2_s"]
        assert r["T_total_s"] == pytest.approx(expect, rel=1e-12)
        assert r["T_up_s"] == pytest.approx(r["T_up_p1_s"] + r["T_up_p2_s"], rel=1e-12)


def test_aggregate_all_totals_recomputable():
    cfg = parse_config(raw_config(schedule={"scheme": "aggregate_all"},
                                  topology={"K": 6}, straggler=None))
    rows, straggler_rows = compute_rows(cfg)
    assert straggler_rows == []
    for r in rows:
        assert r["T_total_s"] == pytest.approx(
            r["T_down_s"] + r["T_cp_max_s"] + r["T_up_s"], rel=1e-12)
        assert r["T_up_p2_s"] == 0.0


def test_run_experiment_replays_byte_identical(tmp_path):
    raw = raw_config(topology={"K": [6]},
                     routing={"mode": ["only_cloud", "inc_alg"], "trials": 2},
                     straggler={"p_cloud": 0.3, "p_edge": [0.5], "v": [2],
                                "mc_trials": 2000})
    cfg = parse_config(raw)
    first = run_experiment(cfg, tmp_path / "a")
    second = run_experiment(cfg, tmp_path / "b")
    for name in ("results", "straggler"):
        assert first["paths"][name].read_bytes() == second["paths"][name].read_bytes()


def test_run_experiment_seed_override(tmp_path):
    raw = raw_config(topology={"K": [5]}, routing={"mode": "only_cloud"},
                     straggler=None)
    cfg = parse_config(raw)
    result = run_experiment(cfg, tmp_path / "o", seed_override=99)
    assert all(r["seed"] == 99 for r in result["rows"])
    assert cfg.seed == 7  # caller's config untouched


# -- figure reshaping --------------------------------------------------------

def test_figure_rows_fig4_and_fig5(small_run):
    cfg, rows, straggler_rows = small_run
    out = figure_rows(cfg, rows, straggler_rows)
    assert len(out) == len(rows)
    assert {r["kind"] for r in out} == {"total_latency_s"}
    assert {r["x"] for r in out} == {8, 12}

    cfg5 = ExperimentConfig(**{**cfg.__dict__, "experiment": "fig5"})
    out5 = figure_rows(cfg5, rows, straggler_rows)
    assert {r["x"] for r in out5} == {232.0}


def test_figure_rows_fig6_drops_rows_without_traffic(small_run):
    cfg, rows, straggler_rows = small_run
    cfg6 = ExperimentConfig(**{**cfg.__dict__, "experiment": "fig6"})
    out = figure_rows(cfg6, rows, straggler_rows)
    assert {r["series"] for r in out} == {"only_cloud", "non_inc_lb", "inc_alg"}
    assert len(out) == 2 * 3


def test_figure_rows_fig7_pairs(small_run):
    cfg, rows, straggler_rows = small_run
    cfg7 = ExperimentConfig(**{**cfg.__dict__, "experiment": "fig7"})
    out = figure_rows(cfg7, rows, straggler_rows)
    assert len(out) == 2 * len(straggler_rows)
    assert {r["series"] for r in out} == {"p_edge=0.5"}
    assert {r["kind"] for r in out} == {"analytic", "simulated"}


def test_figure_rows_rejects_other_experiments(small_run):
    cfg, rows, straggler_rows = small_run
    bad = ExperimentConfig(**{**cfg.__dict__, "experiment": "smoke"})
    with pytest.raises(ValueError, match="figure id"):
        figure_rows(bad, rows, straggler_rows)


# -- verification suites and CLI --------------------------------------------

def test_verify_suites_pass(tmp_path):
    results = verify_suites(seed=2026, out_dir=tmp_path)
    assert [name for name, _, _ in results] == [
        "grouping-equivalence", "lp-ilp-rounding-sandwich",
        "rounding-approximation-bound"]
    assert all(ok for _, ok, _ in results), results
    assert (tmp_path / "trace.bin").stat().st_size > 0


def cli_config_file(tmp_path, **over):
    base = {"topology": {"K": 5}, "routing": {"mode": "only_cloud"},
            "straggler": {"p_cloud": 0.3, "p_edge": 0.5, "v": 2,
                          "mc_trials": 1000}}
    base.update(over)
    raw = raw_config(**base)
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


def test_cli_run(tmp_path, capsys):
    cfg = cli_config_file(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    header = (out / "results.csv").read_text().splitlines()[0]
    assert header == ",".join(RESULT_COLUMNS)
    assert (out / "straggler.csv").exists()


def test_cli_run_seed_flag(tmp_path):
    cfg = cli_config_file(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out_a),
                     "--seed", "11"]) == 0
    assert cli.main(["run", "--config", str(cfg), "--out", str(out_b),
                     "--seed", "11"]) == 0
    assert (out_a / "results.csv").read_bytes() == (out_b / "results.csv").read_bytes()
    assert ",11," in (out_a / "results.csv").read_text().splitlines()[1]


def test_cli_run_errors(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("topology: [unclosed\n")
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "error:" in err


def test_cli_sweep(tmp_path):
    cfg = cli_config_file(tmp_path, straggler=None)
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--config", str(cfg), "--param", "topology.K",
                     "--values", "4,6", "--out", str(out)]) == 0
    for label, k in (("topology_K=4", 4), ("topology_K=6", 6)):
        lines = (out / label / "results.csv").read_text().splitlines()
        assert lines[1].split(",")[1] == str(k)


def test_cli_plot_data(tmp_path, capsys):
    cfg = cli_config_file(tmp_path)
    out = tmp_path / "plots"
    assert cli.main(["plot-data", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "fig4.csv").read_text().splitlines()
    assert lines[0] == ",".join(LONG_COLUMNS)
    assert len(lines) > 1
    assert "wrote" in capsys.readouterr().out


def test_cli_verify_exit_codes(monkeypatch, capsys):
    monkeypatch.setattr(cli, "verify_suites",
                        lambda seed, out_dir: [("suite", True, "fine")])
    assert cli.main(["verify"]) == 0
    monkeypatch.setattr(cli, "verify_suites",
                        lambda seed, out_dir: [("suite", False, "broken")])
    assert cli.main(["verify"]) == 2
    assert "FAIL" in capsys.readouterr().out


def test_cli_rejects_bad_usage():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--config"])
    assert exc.value.code == 1


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("FEDINC_THREADS", "3")
    assert harness._thread_count() == 3
    monkeypatch.setenv("FEDINC_THREADS", "0")
    assert harness._thread_count() == 1
    monkeypatch.delenv("FEDINC_THREADS")
    assert harness._thread_count() >= 1
