"""Command line: ``sawlab run | resume | report``.

Exit codes: 0 ok, 2 invalid config, 3 enumeration budget exceeded, 4 I/O or
corrupt run directory.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import ENGINES, load_config
from .errors import BudgetExceeded, CorruptState, InvalidConfig, RunIOError

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_IO = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sawlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a config into a run directory")
    r.add_argument("--config", metavar="PATH")
    r.add_argument("--out", metavar="DIR")
    r.add_argument("--seed", type=int, metavar="U64")
    r.add_argument("--threads", type=int, metavar="N")
    r.add_argument("--engine", choices=ENGINES)
    r.add_argument("--limit", type=int, help=argparse.SUPPRESS)
    r.add_argument("--no-report", action="store_true", help="skip writing report files")

    s = sub.add_parser("resume", help="finish the missing cells of a run directory")
    s.add_argument("run_dir", nargs="?")
    s.add_argument("--out", metavar="DIR")
    s.add_argument("--threads", type=int, default=1, metavar="N")
    s.add_argument("--limit", type=int, help=argparse.SUPPRESS)

    t = sub.add_parser("report", help="write CSV tables and SVG charts for a run")
    t.add_argument("run_dir", nargs="?")
    t.add_argument("--out", metavar="DIR")
    return p


def _run_dir(args):
    path = args.run_dir or args.out
    if not path:
        raise InvalidConfig("a run directory is required (positional or --out)")
    return path


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            overrides = {"seed": args.seed, "threads": args.threads, "engine": args.engine,
                         "out": args.out}
            cfg = load_config(args.config, overrides)
            if not cfg.out:
                raise InvalidConfig("no output directory: pass --out or set out in the config")
            pipeline.run(cfg, cfg.out, cfg.threads, args.limit)
            if not args.no_report:
                pipeline.report(cfg.out)
        elif args.command == "resume":
            pipeline.resume(_run_dir(args), args.threads, args.limit)
            pipeline.report(_run_dir(args))
        else:
            pipeline.report(_run_dir(args))
    except InvalidConfig as exc:
        print(f"sawlab: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"sawlab: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (RunIOError, CorruptState, OSError) as exc:
        print(f"sawlab: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
