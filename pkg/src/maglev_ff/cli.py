"""Command-line front end: ``maglev-ff simulate | compare | stability``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ExperimentConfig, config_from_dict, load_config, parse_quantity
from .errors import ConfigError, NoFeasibleEpsilon, SimulationError
from .params import COORDS

CONFIG_ENV = "MAGLEV_FF_CONFIG"

EXIT_OK, EXIT_UNVERIFIED, EXIT_CONFIG, EXIT_SIMULATION, EXIT_NO_EPSILON = 0, 1, 2, 3, 4

log = logging.getLogger("maglev_ff")


def _parse_mismatch(text: str) -> tuple[float, ...]:
    values = [0.0] * 6
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise ConfigError(f"--mismatch expects coord=value pairs, got {item!r}")
        coord, val = (s.strip() for s in item.split("=", 1))
        if coord not in COORDS:
            raise ConfigError(f"--mismatch: unknown coordinate {coord!r}; choose from {', '.join(COORDS)}")
        values[COORDS.index(coord)] = parse_quantity(val, f"--mismatch {coord}")
    return tuple(values)


def resolve_config(args) -> ExperimentConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    cfg = load_config(path) if path else ExperimentConfig()
    data = cfg.to_dict()
    if args.method:
        data["methods"] = args.method
    if args.scenario:
        data["scenarios"] = args.scenario
    if args.mismatch is not None:
        data["mismatch"] = list(_parse_mismatch(args.mismatch))
    if args.disturbance is not None:
        data["disturbance_enabled"] = args.disturbance == "on"
    if args.out:
        data["output_dir"] = args.out
    return config_from_dict(data)


def _progress(sc, m, rec):
    log.info("finished %s / %s", sc, m)


def cmd_simulate(cfg: ExperimentConfig) -> int:
    from .experiments import run_file_name, run_grid, write_manifest, write_metrics_csv

    out = Path(cfg.output_dir)
    rows = run_grid(cfg, out, progress=_progress)
    write_metrics_csv(rows, out / "metrics.csv")
    files = [out / run_file_name(s, m) for s in cfg.scenarios for m in cfg.methods] + [out / "metrics.csv"]
    write_manifest(out, cfg, "simulate", files)
    print(f"wrote {len(files) - 1} run files and metrics.csv to {out}")
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig) -> int:
    from .experiments import (
        format_tables, run_file_name, run_grid, write_manifest, write_metrics_csv, write_metrics_json, write_traces,
    )

    out = Path(cfg.output_dir)
    rows, records = run_grid(cfg, out, progress=_progress, keep_records=True)
    write_metrics_csv(rows, out / "metrics.csv")
    write_metrics_json(rows, out / "metrics.json")
    table = format_tables(rows, cfg)
    (out / "tables.txt").write_text(table)
    traces = write_traces(records, out)
    files = [out / run_file_name(s, m) for s in cfg.scenarios for m in cfg.methods]
    files += [out / "metrics.csv", out / "metrics.json", out / "tables.txt", *traces]
    write_manifest(out, cfg, "compare", files)
    print(table)
    return EXIT_OK


def cmd_stability(cfg: ExperimentConfig) -> int:
    from .experiments import run_stability, write_manifest

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = run_stability(cfg)
    res.to_csv(out / "stability.csv")
    verdict = res.verdict()
    (out / "verdict.txt").write_text(verdict + "\n")
    write_manifest(out, cfg, "stability", [out / "stability.csv", out / "verdict.txt"])
    print(verdict)
    return EXIT_OK if res.stable else EXIT_UNVERIFIED


COMMANDS = {"simulate": cmd_simulate, "compare": cmd_compare, "stability": cmd_stability}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maglev-ff", description="Feedforward comparison for a levitated plate.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"YAML experiment config (default: ${CONFIG_ENV} or built-in defaults)")
    common.add_argument("--method", help="comma-separated feedforward methods, or 'all'")
    common.add_argument("--scenario", help="comma-separated scenarios, or 'all'")
    common.add_argument("--mismatch", help="initial-condition offsets, e.g. chi=5urad,psi=1e-6")
    common.add_argument("--disturbance", choices=("on", "off"), help="apply the input disturbance in *-dist scenarios")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run the scenario/method grid and write records")
    sub.add_parser("compare", parents=[common], help="run the grid and emit norm tables and plot data")
    sub.add_parser("stability", parents=[common], help="Lyapunov verification along a closed-loop run")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoFeasibleEpsilon as exc:
        print(f"stability: no feasible epsilon: {exc}", file=sys.stderr)
        return EXIT_NO_EPSILON
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
