"""Command line front end: ``sdnsn validate`` and ``sdnsn run``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ParseError, ScenarioError, SdnsnError
from .scenario import load_scenario
from .simnet import trace_text

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2

log = logging.getLogger("sdnsn")


def _report(exc: ScenarioError) -> None:
    print(f"invalid: {exc}", file=sys.stderr)
    for v in exc.violations:
        print(f"  - {v}", file=sys.stderr)


def cmd_validate(args) -> int:
    try:
        sc = load_scenario(args.path)
    except ScenarioError as exc:
        _report(exc)
        return EXIT_INVALID
    print(f"ok: {args.path} ({len(sc.topology.nodes)} agents, {len(sc.charts)} charts, "
          f"{len(sc.requests)} requests)")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        _report(exc)
        return EXIT_INVALID
    try:
        trace, metrics = sc.simulator(seed=args.seed).run()
    except SdnsnError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace_text(trace))
    if args.metrics:
        with open(args.metrics, "w") as fh:
            json.dump(metrics, fh, indent=2)
            fh.write("\n")
    print(metrics["trace_digest"])
    if metrics["non_quiescent"]:
        print(f"warning: horizon reached with {metrics['pending_events']} events pending",
              file=sys.stderr)
        if args.strict:
            return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdnsn", description="Named service networking simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario file and list every violation")
    v.add_argument("path")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="simulate a scenario and print the trace digest")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--trace", help="write the tab-separated trace here")
    r.add_argument("--metrics", help="write the JSON metrics summary here")
    r.add_argument("--strict", action="store_true",
                   help="exit 2 if the horizon is reached with events still pending")
    r.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
