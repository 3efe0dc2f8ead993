"""Command-line entry point: single runs and (N, v) sweeps."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, SimConfig, load_config
from .sweep import emit_results, format_csv, format_records, run_cell, summarize, sweep

log = logging.getLogger("probemac")


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probemac", description="Probe-and-block CDMA voice MAC simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one configuration")
    run.add_argument("--config", required=True, type=Path, help="flat key = value config file")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--frames", type=int, help="override total_frames")
    run.add_argument("--out", type=Path, help="output file (default: stdout)")
    run.add_argument("--format", choices=["csv", "records"], default="csv")

    sw = sub.add_parser("sweep", help="run a grid of (N, v) cells with replications")
    sw.add_argument("--config", required=True, type=Path, help="base config; N, v_kph and seed are varied")
    sw.add_argument("--n", type=_int_list, default=[20, 40, 60, 80, 100], help="comma-separated node counts")
    sw.add_argument("--v", type=_float_list, default=[10.0, 20.0], help="comma-separated speeds in km/h")
    sw.add_argument("--reps", type=int, default=5, help="replications per cell (seeds seed..seed+reps-1)")
    sw.add_argument("--frames", type=int, help="override total_frames")
    sw.add_argument("--workers", type=int, default=1, help="parallel processes")
    sw.add_argument("--out", required=True, type=Path, help="output directory")
    return parser


def _load(args) -> SimConfig:
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if args.frames is not None:
        changes["total_frames"] = args.frames
    cfg = cfg.replace(**changes)
    cfg.validate()
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    row = run_cell(cfg)
    text = format_csv([row]) if args.format == "csv" else format_records([row])
    if args.out:
        emit_results([row], args.out, args.format)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if args.reps < 1:
        raise ConfigError("--reps must be >= 1")
    if not args.n or not args.v:
        raise ConfigError("--n and --v must each list at least one value")
    for n in args.n:
        cfg.replace(N=n).validate()
    args.out.mkdir(parents=True, exist_ok=True)
    rows = sweep(args.n, args.v, cfg, args.reps, workers=args.workers)
    emit_results(rows, args.out / "results.csv", "csv")
    emit_results(rows, args.out / "results.jsonl", "records")
    (args.out / "summary.json").write_text(json.dumps(summarize(rows), indent=2) + "\n")
    failed = sum("error" in r for r in rows)
    log.info("%d runs, %d failed; results in %s", len(rows), failed, args.out)
    return 1 if failed else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return cmd_run(args) if args.command == "run" else cmd_sweep(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
