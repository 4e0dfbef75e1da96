"""Command line entry point.

Subcommands map one-to-one onto the studies: ``cell`` summarises the
unit-cell solution, ``noise-check`` runs the assumption validators,
``simulate`` dumps sample paths, ``converge`` runs the coupled
convergence study, ``variance`` the exact-variance comparison and
``semigroup`` the remainder-scaling study.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import emit_report, load_config, run_study

STUDIES = ("cell", "noise-check", "simulate", "converge", "variance", "semigroup")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multiscale-spde",
        description="Numerical laboratory for periodic homogenisation of "
                    "stochastic heat equations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STUDIES:
        p = sub.add_parser(name, help=f"run the {name} study")
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override study seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--paths", type=int, default=None,
                       help="override Monte Carlo path count")
        p.add_argument("--quiet", action="store_true", help="suppress stdout summary")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = load_config(args.config)
    study = config.setdefault("study", {})
    study["kind"] = args.command
    if args.seed is not None:
        study["seed"] = args.seed
    if args.paths is not None:
        study["paths"] = args.paths
    if args.out is not None:
        study["out"] = args.out

    report = run_study(config)
    out_dir = study.get("out")
    if out_dir:
        files = emit_report(report, out_dir)
        if not args.quiet:
            for f in files:
                print(f"wrote {f}")
    if not args.quiet:
        for line in report.summary_lines():
            print(line)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
