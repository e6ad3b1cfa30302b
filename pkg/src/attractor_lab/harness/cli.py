"""``attractor-lab <subcommand> --config <path> [--out <dir>] [--seed <u64>] [--workers <n>]``."""
from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigurationError
from .config import load_config
from .runner import EXIT_EXPERIMENT, EXIT_OK, EXIT_VALIDATION, SUBCOMMANDS, default_out_dir, run, run_report

log = logging.getLogger("attractor_lab")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="attractor-lab", description="Damped wave equation experiments.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="TOML run configuration (not needed for report)")
    p.add_argument("--out", help="output directory; for report, the run directory to summarise")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--workers", type=int, default=1, help="parallel trajectory workers")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_VALIDATION

    if args.subcommand == "report":
        if args.out is None and args.config is None:
            print("error: report needs --out <run dir> (or --config to locate the default run dir)", file=sys.stderr)
            return EXIT_VALIDATION
        if args.out is not None:
            code = run_report(args.out)
            print(f"report: {args.out} (exit {code})")
            return code
        try:
            cfg = load_config(args.config)
        except ConfigurationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        # every default run directory this config has produced
        dirs = [d for d in (default_out_dir(sub, cfg) for sub in SUBCOMMANDS if sub != "report") if d.is_dir()]
        if not dirs:
            print("error: no run directories found for this config; pass --out", file=sys.stderr)
            return EXIT_EXPERIMENT
        code = EXIT_OK
        for d in dirs:
            c = run_report(d)
            print(f"report: {d} (exit {c})")
            code = max(code, c)
        return code

    if args.config is None:
        print(f"error: {args.subcommand} requires --config", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        cfg = load_config(args.config)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = args.out if args.out is not None else default_out_dir(args.subcommand, cfg)
    manifest = run(cfg, args.subcommand, out, workers=args.workers)
    code = manifest.data["exit_code"]
    print(f"{args.subcommand}: {manifest.outcome} -> {out} (exit {code})")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
