"""``cmop-lab <command> --config <path> [--out DIR] [--threads N] [--seed S]``.

Exit codes: 0 success, 1 configuration error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .. import algebra as alg
from ..cmop_ss import NoDecayError
from ..model import SizeCapError, TopologyError
from .config import ConfigError, load_config
from .emit import emit
from .suites import COMMANDS, SolverFailure

log = logging.getLogger("cmop_lab")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


def _threads(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("CMOP_LAB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"CMOP_LAB_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("CMOP_LAB_THREADS must be positive")
        return n
    return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cmop-lab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON experiment file")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--threads", type=int, help="worker threads for independent points")
    ap.add_argument("--seed", type=int, help="RNG seed (overrides solver.seed)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = load_config(args.config).with_overrides(out=args.out, seed=args.seed)
        threads = _threads(args.threads)
        run = COMMANDS[args.command](cfg, threads)
    except (ConfigError, SizeCapError, TopologyError, NoDecayError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, alg.AlgebraError, ArithmeticError, RuntimeError, IndexError, ValueError) as e:
        print(f"solver failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_SOLVER
    try:
        emit(cfg.section("output")["dir"], run)
    except OSError as e:
        print(f"output error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
