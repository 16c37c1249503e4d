"""Command line front end: ``sidmp {simulate,certify,learn,gait} <config>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DivergenceError, SidmpError
from .scenario import ALL_OPS, CERTIFY_OPS, LEARN_OPS, Runner, bundled_scenarios, load_scenario

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

COMMANDS = {
    "simulate": ("run the whole pipeline (simulate, measure, certify, learn)", ALL_OPS),
    "certify": ("run only the certificate steps and print a PASS/FAIL table", CERTIFY_OPS),
    "learn": ("run only the weight-fitting steps", LEARN_OPS),
    "gait": ("run a gait scenario with transformation systems", ALL_OPS),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sidmp",
        description="Simulate, certify and fit dynamic movement primitive networks.",
        epilog="Bundled scenarios: " + ", ".join(bundled_scenarios()))
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (helptext, _) in COMMANDS.items():
        p = sub.add_parser(name, help=helptext, description=helptext)
        p.add_argument("config", help="scenario JSON file or bundled scenario name")
        p.add_argument("--out-dir", type=Path, default=None,
                       help="output directory (default: ./out/<scenario name>)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--samples", type=int, default=None,
                       help="override the sample count of every certificate region")
        p.add_argument("--verbose", "-v", action="count", default=0,
                       help="log progress (-vv for debug output)")
    return parser


def _report(kind, message, code, **extra):
    doc = {"error": kind, "message": message, "exit_code": code}
    doc.update(extra)
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.samples is not None and args.samples < 1:
        return _report("ConfigError", "--samples must be positive", EXIT_CONFIG,
                       where="--samples")
    _, ops = COMMANDS[args.command]
    try:
        sc = load_scenario(args.config, args.seed)
        out_dir = args.out_dir or Path("out") / sc.name
        runner = Runner(sc, out_dir, samples=args.samples, ops=ops,
                        gait=args.command == "gait")
        results = runner.run()
        files = sorted(set(runner.files))
    except ConfigError as exc:
        return _report("ConfigError", exc.reason, EXIT_CONFIG, where=exc.where)
    except DivergenceError as exc:
        return _report("DivergenceError", str(exc), EXIT_DIVERGED, last_time=exc.last_time)
    except SidmpError as exc:
        return _report(type(exc).__name__, str(exc), EXIT_ERROR)
    except OSError as exc:
        return _report("OSError", str(exc), EXIT_ERROR)
    for res in results:
        if args.command == "certify" and res.certificate is not None:
            note = ""
            if "as_expected" in res.details:
                note = " (as expected)" if res.details["as_expected"] else " (UNEXPECTED)"
            print(f"{res.label}: {res.certificate.summary()}{note}")
        elif res.passed is not None or args.command != "certify":
            print(res.line())
    if files:
        print(f"wrote {len(files)} file(s) to {out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
