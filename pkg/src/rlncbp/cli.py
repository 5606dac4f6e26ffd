"""Command line entry point: ``rlncbp {bound,sensor,images} --config C --seed S --out O``."""
from __future__ import annotations

import argparse
import logging
import sys
import time

from .harness import ConfigError, emit_csv, load_config, run_experiment

log = logging.getLogger("rlncbp")

_HELP = {
    "bound": "error-exponent bounds for Laplacian chain sources",
    "sensor": "BP decoding error rate for Gaussian sensor fields",
    "images": "BP decoding of an image sequence (binary PGM frames)",
}


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rlncbp", description="RLNC source decoding experiments")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in _HELP.items():
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.add_argument("--seed", required=True, type=_seed, help="unsigned 64-bit master seed")
        p.add_argument("--out", required=True, help="output CSV path")
        p.add_argument("--workers", type=int, default=None,
                       help="override the worker count from the config")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.command)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            if "workers" not in cfg.values:
                raise ConfigError(f"{args.command} does not use workers")
            cfg.values["workers"] = args.workers
        t0 = time.perf_counter()
        rows = run_experiment(cfg, args.seed)
        lines = cfg.resolved_lines() + [f"seed = {args.seed}"]
        emit_csv(rows, args.out, lines)
        log.info("%d rows written to %s in %.1f s", len(rows), args.out, time.perf_counter() - t0)
    except ConfigError as e:
        print(f"rlncbp {args.command}: configuration error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as e:
        print(f"rlncbp {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
