"""Command line entry point ``bp-lab``.

Exit codes: 0 success, 1 a verify-all criterion failed, 2 invalid config or
model, 3 degraded run (capped fraction above 1e-3), 4 I/O failure.
"""
from __future__ import annotations

import argparse
import datetime
import logging
import sys

from bplab import __version__
from bplab.config import ConfigError, ValidationFailure, parse_config
from bplab.report import render
from bplab.runner import is_degraded, run_experiment

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_DEGRADED, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("bplab")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bp-lab", description="Decomposable branching processes in random environment.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, outputs=True):
        sp.add_argument("--config", required=True, help="experiment config (JSON)")
        sp.add_argument("-v", "--verbose", action="store_true", help="debug logging")
        if outputs:
            sp.add_argument("--seed", type=int, help="override the config seed")
            sp.add_argument("--workers", type=int, help="worker processes")
            sp.add_argument("--out", help="result file (default: stdout)")
            sp.add_argument("--format", choices=("csv", "json"))

    common(sub.add_parser("run", help="run the configured experiment"))
    common(sub.add_parser("validate", help="check the config and its model"), outputs=False)
    va = sub.add_parser("verify-all", help="run the acceptance suite")
    common(va)
    va.add_argument("--scale", type=float, help="replicate-count multiplier")
    return p


def _write(text: str, path) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr
    )
    try:
        cfg = parse_config(args.config, validate=args.command != "validate")
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_IO
    except ValidationFailure as exc:
        for line in exc.report.lines():
            log.error(line)
        return EXIT_INVALID
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_INVALID

    if args.command == "validate":
        if cfg.report is None:
            log.info("config ok (no model)")
            return EXIT_OK
        for line in cfg.report.lines():
            log.info(line)
        return EXIT_OK if cfg.report.ok else EXIT_INVALID

    if args.command == "verify-all":
        cfg.kind = "verify-all"
        if args.scale is not None:
            if not args.scale > 0:
                log.error("--scale must be positive")
                return EXIT_INVALID
            cfg.scale = args.scale
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        if args.workers < 1:
            log.error("--workers must be >= 1")
            return EXIT_INVALID
        cfg.workers = args.workers
    fmt = args.format or cfg.format
    out = args.out or cfg.output

    log.info("bp-lab %s, kind %s, seed %d, started %s", __version__, cfg.kind, cfg.seed,
             datetime.datetime.now().isoformat(timespec="seconds"))
    table = run_experiment(cfg)
    try:
        _write(render(table, fmt), out)
    except OSError as exc:
        log.error("cannot write results: %s", exc)
        return EXIT_IO

    if cfg.kind == "verify-all":
        failed = [r for r in table.rows if r.verdict != "pass"]
        return EXIT_FAILED if failed else EXIT_OK
    if is_degraded(table):
        log.warning("degraded: capped fraction %.3g exceeds 1e-3", table.max_capped_fraction())
        return EXIT_DEGRADED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
