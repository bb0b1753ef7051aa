"""Command-line entry point: run experiments, verify invariants, plot
CSV outputs, and print analytic cost reports."""

import argparse
import json
import sys

from . import harness
from . import verification as verify_mod
from .dataio import load_config


def _cmd_run(args):
    config = load_config(args.config)
    if args.csv:
        config = config.replace(csv_out=args.csv)
    exp = harness.run(config)
    last = exp.records[-1]
    print(f"status={exp.status} rounds={last.round} fgap={last.fgap:.3e} "
          f"dist={last.dist:.3e} up_bits/node={last.up_bits} "
          f"down_bits/node={last.down_bits}")
    if config.csv_out:
        print(f"wrote {config.csv_out}")
    return 0 if exp.status != "diverged" else 1


def _cmd_verify(args):
    report = verify_mod.verify(args.suite)
    for c in report.checks:
        mark = "pass" if c.passed else "FAIL"
        print(f"[{mark}] {c.name}: measured={c.measured:.6g} bound={c.bound:.6g}")
    print(f"suite {report.suite}: "
          f"{'all checks passed' if report.passed else 'FAILURES present'}")
    return 0 if report.passed else 1


def _cmd_plot(args):
    harness.plot(args.csv, args.output, names=args.names,
                 include_downloads=not args.upload_only)
    print(f"wrote {args.output}")
    return 0


def _cmd_cost(args):
    config = load_config(args.config)
    rep = harness.cost_report(config)
    print(json.dumps({
        "upload_bits": rep.upload.total,
        "upload_floats": rep.upload_floats,
        "download_bits": rep.download.total,
        "download_floats": rep.download_floats,
        "setup_bits": rep.setup_bits,
        "float_bits": rep.float_bits,
        "notes": rep.notes,
    }, indent=2))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="basiskit",
        description="Communication-efficient Newton-type federated "
                    "optimization simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured experiment")
    p_run.add_argument("config", help="path to a flat JSON run config")
    p_run.add_argument("--csv", help="override the CSV output path")
    p_run.set_defaults(fn=_cmd_run)

    p_ver = sub.add_parser("verify", help="run a verification suite")
    p_ver.add_argument("suite", nargs="?", default="all",
                       help="suite name or 'all'")
    p_ver.set_defaults(fn=_cmd_verify)

    p_plot = sub.add_parser("plot", help="plot CSVs as an SVG chart")
    p_plot.add_argument("csv", nargs="+", help="input CSV paths")
    p_plot.add_argument("-o", "--output", required=True, help="output SVG")
    p_plot.add_argument("--names", nargs="*", help="series names")
    p_plot.add_argument("--upload-only", action="store_true",
                        help="plot upload bits only on the x axis")
    p_plot.set_defaults(fn=_cmd_plot)

    p_cost = sub.add_parser("cost", help="print the analytic cost report")
    p_cost.add_argument("config", help="path to a flat JSON run config")
    p_cost.set_defaults(fn=_cmd_cost)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
