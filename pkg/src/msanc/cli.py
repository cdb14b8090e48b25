"""Command-line entry point.

    msanc run --config case1.ini --out results/ --svg
    msanc default-config --case case2 > case2.ini
    msanc export-paths --out paths/

Exit status: 0 on success, 1 when the run stopped on a divergence fault
(partial results are still written), 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from msanc.errors import ConfigurationError
from msanc.harness import (
    CASES,
    CONTROLLERS,
    emit_results,
    load_scenario,
    run_scenario,
    scenario_paths,
    scenario_to_config,
)
from msanc.plant_sim import save_path_csv

EXIT_OK = 0
EXIT_FAULT = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msanc",
        description="Mode-switching online secondary-path modeling for modified FXLMS ANC.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and write result files")
    run.add_argument("--config", type=Path, help="INI file with a [scenario] section")
    run.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    run.add_argument("--seed", type=int, help="reference-noise seed")
    run.add_argument("--controller", choices=CONTROLLERS)
    run.add_argument("--case", choices=sorted(CASES), help="preset the other values refine")
    run.add_argument("--trace-decimation", type=int, metavar="K",
                     help="write every K-th sample to trace.csv")
    run.add_argument("--svg", action="store_true", help="also write learning_curve.svg")

    cfg = sub.add_parser("default-config", help="print a preset as an editable config file")
    cfg.add_argument("--case", choices=sorted(CASES), default="case1")

    exp = sub.add_parser("export-paths", help="write the secondary paths as CSV")
    exp.add_argument("--config", type=Path)
    exp.add_argument("--case", choices=sorted(CASES))
    exp.add_argument("--out", type=Path, default=Path("."))
    return parser


def _run(args) -> int:
    sc = load_scenario(args.config, case=args.case, noise_seed=args.seed,
                       controller=args.controller, trace_decimation=args.trace_decimation)
    rec = run_scenario(sc)
    emit_results(rec, args.out, svg=args.svg)
    for key, val in rec.summary.items():
        print(f"{key}: {val}")
    if rec.fault:
        print(f"error: run stopped at sample {rec.fault_sample}: {rec.fault}", file=sys.stderr)
        return EXIT_FAULT
    return EXIT_OK


def _export_paths(args) -> int:
    sc = load_scenario(args.config, case=args.case)
    args.out.mkdir(parents=True, exist_ok=True)
    for pid, h in scenario_paths(sc).items():
        p = args.out / f"{pid}.csv"
        save_path_csv(h, p)
        print(p)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "export-paths":
            return _export_paths(args)
        sys.stdout.write(scenario_to_config(CASES[args.case]()))
        return EXIT_OK
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
