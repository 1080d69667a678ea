"""Command line entry point: ``pcaloc run | validate | spectrum``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import load_config
from .errors import ConfigError
from .harness import run_monte_carlo, spectrum_surface, write_outputs, write_spectrum

log = logging.getLogger("pcaloc")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pcaloc", description="Direct localization with partly calibrated arrays.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo experiment")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default: output_dir from the config)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--threads", type=int, default=1, help="parallel trials")

    val = sub.add_parser("validate", help="check a configuration file")
    val.add_argument("config")

    spec = sub.add_parser("spectrum", help="dump a MUSIC-like or MVDR-like surface over the grid")
    spec.add_argument("config")
    spec.add_argument("--estimator", choices=["music", "mvdr"], required=True)
    spec.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    spec.add_argument("--seed", type=int)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if getattr(args, "seed", None) is not None:
            cfg = replace(cfg, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "validate":
            print(f"ok: {len(cfg.estimators)} estimators, {len(cfg.sweep_values)} sweep values, "
                  f"{cfg.trials} trials, {cfg.grid.n_points} grid points")
        elif args.command == "run":
            if args.threads < 1:
                print("config error: --threads must be >= 1", file=sys.stderr)
                return 1
            records = run_monte_carlo(cfg, threads=args.threads)
            out = write_outputs(cfg, records, args.out or cfg.output_dir)
            log.info("wrote %s", out)
        else:
            points, values = spectrum_surface(cfg, args.estimator)
            write_spectrum(points, values, sys.stdout if args.out == "-" else args.out)
    except BrokenPipeError:
        return 0
    except Exception as exc:  # any runtime failure maps to exit code 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
