"""Command-line entry point ``nssg``.

Subcommands::

    nssg run <config|shipped-name> [--out DIR] [--dt X] [--tmax X] [--stride N] [--checks a,b]
    nssg run-all --out DIR
    nssg scan brockett --delta X --radius X --resolution N --out DIR
    nssg summarize <report.json|run-dir>... --out FILE
    nssg list

``SG_SEED`` is reserved for future stochastic features and is currently
ignored; every run is deterministic.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from . import experiment as ex
from .config import ConfigError, load, override, shipped_names
from .speed_gradient import AssumptionScanSpec

log = logging.getLogger("nssg")

EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _positive_float(text):
    v = float(text)
    if not v > 0.0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="nssg", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config", help="path to a .cfg file or the name of a shipped config")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--dt", type=_positive_float, help="step size override")
    p.add_argument("--tmax", type=_positive_float, help="horizon override")
    p.add_argument("--stride", type=int, help="record every N-th step (override)")
    p.add_argument("--checks", help="comma-separated checks to enable (override)")

    p = sub.add_parser("run-all", help="run every shipped config")
    p.add_argument("--out", required=True, help="root directory; one subdirectory per config")

    p = sub.add_parser("scan", help="grid scan of the speed-gradient lower bound")
    p.add_argument("plant", choices=("brockett",))
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--resolution", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory for scan.json")

    p = sub.add_parser("summarize", help="tabulate run reports")
    p.add_argument("reports", nargs="+", help="report.json files or run directories")
    p.add_argument("--out", required=True, help="JSON output file; the text table goes next to it")

    sub.add_parser("list", help="list shipped configs")
    return parser


def _cmd_run(args):
    checks = None if args.checks is None else tuple(c.strip() for c in args.checks.split(",") if c.strip())
    cfg = override(load(args.config), dt=args.dt, t_max=args.tmax, record_stride=args.stride, checks=checks)
    out = args.out or cfg.out or os.path.join("runs", cfg.name)
    log.info("running %s -> %s", cfg.name, out)
    res = ex.run_experiment(cfg, out)
    for c in res.checks:
        print(f"{cfg.name}: {c.name}: {'pass' if c.passed else 'FAIL'} (value={c.value}, threshold={c.threshold})")
    print(f"{cfg.name}: termination={res.trajectory.termination} report={os.path.join(out, 'report.json')}")
    return 0 if res.passed else EXIT_CHECK_FAILED


def _cmd_run_all(args):
    codes = ex.run_shipped(args.out)
    reports = ex.load_reports([os.path.join(args.out, n) for n in codes])
    text, rows = ex.summarize(reports)
    _write_summary(os.path.join(args.out, "summary.json"), text, rows)
    print(text, end="")
    return EXIT_CHECK_FAILED if any(codes.values()) else 0


def _cmd_scan(args):
    spec = AssumptionScanSpec(args.delta, args.radius, args.resolution)
    res = ex.run_scan(args.plant, spec, args.out)
    if res.empty:
        print(f"empty admissible region for delta={args.delta}, radius={args.radius}")
    else:
        print(f"a >= {res.a_lower_bound:.6g} at {list(res.argmin_point)} ({res.admissible_points} points)")
    return 0


def _write_summary(path, text, rows):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(ex.dumps(rows))
    with open(os.path.splitext(path)[0] + ".txt", "w", encoding="utf-8") as fh:
        fh.write(text)


def _cmd_summarize(args):
    text, rows = ex.summarize(ex.load_reports(args.reports))
    _write_summary(args.out, text, rows)
    print(text, end="")
    return 0


def _cmd_list(args):
    for name in shipped_names():
        print(name)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "run-all": _cmd_run_all,
    "scan": _cmd_scan,
    "summarize": _cmd_summarize,
    "list": _cmd_list,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"nssg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
