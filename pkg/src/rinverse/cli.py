"""Command line entry point: ``rinverse run | verify | fixtures list``."""

from __future__ import annotations

import argparse
import sys

from .geometry import FIXTURES
from .harness import (
    EXIT_CONFIG,
    ScenarioError,
    bundled_scenarios,
    emit,
    identity_suite,
    load_scenario,
    run_scenario,
)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rinverse", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "residual report for a scenario"),
                            ("verify", "identity table for a scenario")):
        c = sub.add_parser(name, help=help_text)
        c.add_argument("scenario", help="scenario JSON file or bundled scenario name")
        c.add_argument("--out", metavar="DIR", help="write the report into DIR")
        c.add_argument("--format", choices=("json", "csv"), default="json")
        c.add_argument("--jet-order", type=int, metavar="M")
        c.add_argument("--quad-tol", type=float, metavar="T")
        c.add_argument("--timings", action="store_true",
                       help="include wall-clock timings in JSON output")

    f = sub.add_parser("fixtures", help="bundled sets and scenarios")
    f.add_argument("action", choices=("list",))
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "fixtures":
        print("sets:")
        for name, (_, desc) in FIXTURES.items():
            print(f"  {name:8s} {desc}")
        print("scenarios:")
        for name in sorted(bundled_scenarios()):
            print(f"  {name}")
        return 0

    try:
        scenario = load_scenario(args.scenario, args.jet_order, args.quad_tol)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = (run_scenario if args.command == "run" else identity_suite)(scenario)
    print(report.table())
    if args.out:
        path = emit(report, args.out, args.format, include_timings=args.timings)
        print(f"wrote {path}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
