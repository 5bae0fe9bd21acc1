"""Command-line entry point: ``beamgame run``, ``beamgame sweep`` and ``beamgame default-config``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, emit_default_config, format_angle, load_config, parse_angle
from .engine import (
    OPTIMIZED_PROTOCOLS,
    PROTOCOLS,
    SWEEP_AXES,
    RunTrace,
    SimConfig,
    run,
    sweep,
    write_diagnostics_csv,
    write_manifest,
    write_trace_csv,
)
from .topology import Scenario

log = logging.getLogger("beamgame")

OUT_ENV = "BEAMGAME_OUT"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_CONFIG = 4
EXIT_BAD_FLAGS = 5
EXIT_RUN_FAILED = 6
EXIT_OUTPUT = 7

POWER_TOLERANCE = 1.02


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="beamgame", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    def common(p):
        p.add_argument("--config", type=Path, help="configuration file (defaults to the built-in setup)")
        p.add_argument("--protocol", choices=PROTOCOLS, help="override the configured protocol")
        p.add_argument("--epochs", type=int, help="override the number of epochs")
        p.add_argument("--seed", type=int, help="seed for both placement and the run")
        p.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./out)")

    p_run = sub.add_parser("run", help="simulate one configuration")
    common(p_run)
    p_run.add_argument("--diagnostics", action="store_true", help="also write per-block equilibrium data")

    p_sweep = sub.add_parser("sweep", help="simulate one configuration per axis value")
    common(p_sweep)
    p_sweep.add_argument("--axis", choices=SWEEP_AXES, help="parameter to vary")
    p_sweep.add_argument("--values", help="comma-separated values, e.g. pi/9,pi/36,pi/72")
    p_sweep.add_argument("--seeds", help="comma-separated seeds (default: the single run seed)")
    p_sweep.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    p_cfg = sub.add_parser("default-config", help="print the default configuration")
    p_cfg.add_argument("--out", type=Path, help="write to this file instead of stdout")
    return parser


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load(args) -> tuple[Scenario, SimConfig]:
    if args.config is None:
        scenario, config = Scenario(), SimConfig()
    else:
        if not args.config.is_file():
            raise CliError(f"config file not found: {args.config}", EXIT_MISSING_FILE)
        try:
            scenario, config = load_config(args.config)
        except ConfigError as exc:
            raise CliError(f"{args.config}: {exc}", EXIT_BAD_CONFIG) from None
    changes = {}
    if args.protocol is not None:
        changes["protocol"] = args.protocol
    if args.epochs is not None:
        if args.epochs < 0:
            raise CliError("--epochs must be nonnegative", EXIT_BAD_FLAGS)
        changes["epochs"] = args.epochs
    if args.seed is not None:
        changes["seed"] = args.seed
        scenario = dataclasses.replace(scenario, seed=args.seed)
    return scenario, config.replace(**changes)


def _out_dir(args) -> Path:
    out = args.out if args.out is not None else Path(os.environ.get(OUT_ENV, "out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}", EXIT_OUTPUT) from None
    return out


def _power_ok(trace: RunTrace) -> bool:
    if trace.epochs == 0:
        return True
    return bool(np.all(trace.mean_power[-1] <= POWER_TOLERANCE * trace.p_avg))


def summarize(trace: RunTrace, protocol: str) -> list[str]:
    lines = [f"protocol: {protocol}", f"epochs: {trace.epochs}"]
    if trace.epochs == 0:
        return lines + ["no epochs simulated"]
    worst = float(trace.mean_power[-1].max())
    lines.append(f"final network utility: {trace.final_utility:.6f}")
    lines.append(f"max running-mean BS power: {worst:.6f} W (budget {trace.p_avg:.6f} W, "
                 f"ratio {worst / trace.p_avg:.4f})")
    if protocol in OPTIMIZED_PROTOCOLS:
        verdict = "satisfied" if _power_ok(trace) else "VIOLATED"
        lines.append(f"average power constraint (mean power <= {POWER_TOLERANCE} x budget): {verdict}")
    rate = trace.convergence_rate()
    if not math.isnan(rate):
        lines.append(f"equilibrium convergence rate: {rate:.4f} of blocks")
        lines.append(f"mean best-response iterations per block: {np.nanmean(trace.ne_iterations):.3f}")
    if not np.all(np.isnan(trace.gap)):
        lines.append(f"mean per-epoch gap to ideal: {np.nanmean(trace.gap):.6f}")
    return lines


def _config_record(scenario: Scenario, config: SimConfig) -> dict:
    return {"scenario": dataclasses.asdict(scenario), "config": dataclasses.asdict(config)}


def cmd_run(args) -> int:
    scenario, config = _load(args)
    out = _out_dir(args)
    if args.diagnostics:
        config = config.replace(diagnostics=True)
    log.info("running %s for %d epochs", config.protocol, config.epochs)
    try:
        trace = run(scenario, config)
    except (ValueError, RuntimeError) as exc:
        raise CliError(f"simulation failed: {exc}", EXIT_RUN_FAILED) from None
    try:
        write_trace_csv(out / "trace.csv", trace)
        files = ["trace.csv"]
        if config.diagnostics and config.protocol == "game":
            write_diagnostics_csv(out / "diagnostics.csv", trace)
            files.append("diagnostics.csv")
        (out / "summary.txt").write_text("\n".join(summarize(trace, config.protocol)) + "\n")
        write_manifest(out / "manifest.json", [{"files": files, **_config_record(scenario, config)}])
    except OSError as exc:
        raise CliError(f"cannot write results to {out}: {exc}", EXIT_OUTPUT) from None
    print((out / "summary.txt").read_text(), end="")
    return EXIT_OK


def _parse_values(axis: str, text: str) -> list:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise CliError("--values is empty", EXIT_BAD_FLAGS)
    try:
        if axis == "beam_width":
            return [parse_angle(t.removesuffix("rad").strip()) for t in items]
        if axis == "msr":
            return [float(t.removesuffix("dB").strip()) for t in items]
        if axis in ("ue_count", "feedback"):
            return [int(t) for t in items]
    except (ValueError, ConfigError) as exc:
        raise CliError(f"bad --values for {axis}: {exc}", EXIT_BAD_FLAGS) from None
    bad = [t for t in items if t not in PROTOCOLS]
    if bad:
        raise CliError(f"unknown protocol(s) in --values: {', '.join(bad)}", EXIT_BAD_FLAGS)
    return items


def _value_label(axis: str, value) -> str:
    text = format_angle(value) if axis == "beam_width" else str(value)
    return text.replace("*", "x").replace("/", "_").replace(".", "p")


def cmd_sweep(args) -> int:
    if args.axis is None or args.values is None:
        raise CliError("sweep needs both --axis and --values", EXIT_BAD_FLAGS)
    if args.workers < 1:
        raise CliError("--workers must be at least 1", EXIT_BAD_FLAGS)
    values = _parse_values(args.axis, args.values)
    if args.axis == "protocol" and args.protocol is not None:
        raise CliError("--protocol conflicts with --axis protocol", EXIT_BAD_FLAGS)
    scenario, config = _load(args)
    seeds = None
    if args.seeds is not None:
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise CliError(f"bad --seeds {args.seeds!r}", EXIT_BAD_FLAGS) from None
    out = _out_dir(args)
    try:
        results = sweep(scenario, config, args.axis, values, seeds, workers=args.workers)
    except (ValueError, RuntimeError) as exc:
        raise CliError(f"sweep failed: {exc}", EXIT_RUN_FAILED) from None
    lines = [f"sweep over {args.axis}", ""]
    manifest = []
    per_value: dict = {}
    try:
        for value, seed, trace in results:
            name = f"trace_{args.axis}_{_value_label(args.axis, value)}_seed{seed}.csv"
            write_trace_csv(out / name, trace)
            proto = value if args.axis == "protocol" else config.protocol
            manifest.append({"file": name, "axis": args.axis, "value": value, "seed": seed,
                             "protocol": proto})
            per_value.setdefault(value, []).append(trace)
        for value, traces in per_value.items():
            label = format_angle(value) if args.axis == "beam_width" else value
            utils = [t.final_utility for t in traces]
            ok = all(_power_ok(t) for t in traces)
            lines.append(f"{args.axis}={label}: mean final utility {np.mean(utils):.6f} over "
                         f"{len(utils)} run(s); power budget {'met' if ok else 'EXCEEDED'}")
        (out / "summary.txt").write_text("\n".join(lines) + "\n")
        write_manifest(out / "manifest.json", manifest)
    except OSError as exc:
        raise CliError(f"cannot write results to {out}: {exc}", EXIT_OUTPUT) from None
    print("\n".join(lines))
    return EXIT_OK


def cmd_default_config(args) -> int:
    text = emit_default_config()
    if args.out is None:
        sys.stdout.write(text)
        return EXIT_OK
    try:
        args.out.write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_OUTPUT) from None
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s: %(message)s")
    handler = {"run": cmd_run, "sweep": cmd_sweep, "default-config": cmd_default_config}[args.command]
    try:
        return handler(args)
    except CliError as exc:
        print(f"beamgame: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
