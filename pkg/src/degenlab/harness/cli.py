"""Command-line entry point: ``degenlab <command> --config <path> [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError
from .config import COMMANDS, parse_config
from .output import emit_tables
from .runner import run

log = logging.getLogger("degenlab")

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="degenlab", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON experiment document")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--out", default=None, help="override the output directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        cfg = parse_config(text).with_overrides(args.seed, args.out)
        if cfg.command != args.command:
            raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}", "command")
    except OSError as exc:
        print(f"degenlab: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"degenlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    record = run(cfg)
    try:
        paths = emit_tables(record, cfg.output_dir)
    except OSError as exc:
        print(f"degenlab: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, ok in sorted(record.verdicts.items()):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    for err in record.errors:
        print(f"ERROR {err['type']}: {err['message']}", file=sys.stderr)
    log.info("wrote %s in %.1f s", ", ".join(p.name for p in paths), record.wall_clock or 0.0)
    return record.exit_code


if __name__ == "__main__":
    sys.exit(main())
