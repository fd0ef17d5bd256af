"""Command-line entry point: ``stadium-eth {solve,eth,semiclassics,berry,compare}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import PRESETS, ConfigError, load_config
from .pipeline import (Context, MissingPrerequisite, cmd_berry, cmd_compare, cmd_eth,
                       cmd_semiclassics, cmd_solve)

THREADS_ENV = "STADIUM_ETH_THREADS"
log = logging.getLogger("stadium_eth")


def _threads(flag):
    if flag is not None:
        return flag
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}")
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1")
        return n
    return 1


def build_parser():
    p = argparse.ArgumentParser(prog="stadium-eth", description=__doc__)
    p.add_argument("command", choices=["solve", "eth", "semiclassics", "berry", "compare"])
    p.add_argument("--config", help="TOML or JSON run configuration")
    p.add_argument("--preset", choices=sorted(PRESETS), help="start from a shipped preset")
    p.add_argument("--out", help="output directory (default: config 'output')")
    p.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.preset)
        threads = _threads(args.threads)
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    ctx = Context(cfg, args.out or cfg["output"], threads)
    try:
        if args.command == "solve":
            def progress(done, total):
                log.info("window %d/%d", done, total)
            r = cmd_solve(ctx, progress)
            print(f"solved {r['n_states']} states in {r['n_windows']} windows -> {ctx.out}")
        elif args.command == "eth":
            r = cmd_eth(ctx)
            print(f"eth: {r['n_states']} states, HWHM {r['band']['hwhm']:.4g} "
                  f"(predicted {r['band']['predicted_bandwidth']:.4g}) -> {ctx.out}")
        elif args.command == "semiclassics":
            r = cmd_semiclassics(ctx)
            print(f"bandwidth {r['bandwidth']:.4f}, thermalization time "
                  f"{r['thermalization_time']:.4g} -> {ctx.out}")
        elif args.command == "berry":
            cmd_berry(ctx)
            print(f"berry tables -> {ctx.out}")
        else:
            ok, _ = cmd_compare(ctx)
            with open(os.path.join(ctx.out, "compare_summary.txt")) as fh:
                print(fh.read(), end="")
            return 0 if ok else 1
    except MissingPrerequisite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
