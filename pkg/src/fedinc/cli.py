"""Command line entry points.

    fedinc run --config CFG --out DIR [--seed N]
    fedinc sweep --config CFG --param topology.K --values 500,1000 --out DIR
    fedinc verify [--out DIR] [--seed N]
    fedinc plot-data --config CFG --out DIR

Exit codes: 0 on success, 1 on usage or configuration errors, 2 when a
verification suite fails.
"""

from __future__ import annotations

import argparse
import copy
import sys
from pathlib import Path

import yaml

from fedinc.config import ConfigError, apply_override, load_config, parse_config
from fedinc.harness import (LONG_COLUMNS, figure_rows, run_experiment,
                            verify_suites, write_csv)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="fedinc", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int, default=None)

    sweep = sub.add_parser("sweep", help="rerun a config across values of one field")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", required=True, help="dotted path, e.g. topology.K")
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.add_argument("--out", required=True)

    verify = sub.add_parser("verify", help="run the built-in oracle suites")
    verify.add_argument("--out", default=None)
    verify.add_argument("--seed", type=int, default=2026)

    plot = sub.add_parser("plot-data", help="emit long-format figure CSV")
    plot.add_argument("--config", required=True)
    plot.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    run_experiment(cfg, args.out, seed_override=args.seed)
    return 0


def _cmd_sweep(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raise ConfigError(f"{args.config}: empty config file")
    values = [yaml.safe_load(v) for v in args.values.split(",") if v != ""]
    if not values:
        raise ConfigError("--values: need at least one value")
    for value in values:
        patched = apply_override(copy.deepcopy(raw), args.param, value)
        cfg = parse_config(patched)
        label = f"{args.param.replace('.', '_')}={value}"
        run_experiment(cfg, Path(args.out) / label)
    return 0


def _cmd_verify(args) -> int:
    results = verify_suites(seed=args.seed, out_dir=args.out)
    failed = False
    for name, ok, detail in results:
        status = "ok" if ok else "FAIL"
        print(f"verify: {name}: {status} ({detail})")
        failed = failed or not ok
    return 2 if failed else 0


def _cmd_plot_data(args) -> int:
    cfg = load_config(args.config)
    result = run_experiment(cfg, args.out)
    rows = figure_rows(cfg, result["rows"], result["straggler_rows"])
    out = Path(args.out) / f"{cfg.experiment}.csv"
    write_csv(out, LONG_COLUMNS, rows)
    print(f"wrote {out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "verify": _cmd_verify,
                "plot-data": _cmd_plot_data}
    try:
        return handlers[args.command](args)
    except (ConfigError, FileNotFoundError, ValueError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
