"""
Command line entry point.

    accelaid simulate [--config C] [--out DIR] [--seed S] [--variant V] [--profile P]
    accelaid replay   --data DIR | (config imu_path/gnss_path) [--out DIR] [--variant V]
    accelaid batch    [--config C] [--reps N] [--out DIR] [--seed S] [--variant V]

Exit status is 0 on success, 2 on invalid configuration or data, 1 on a
runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config
from .dataset import load_dataset
from .errors import ConfigError, DatasetError
from .evaluation import VARIANTS, ComparisonRow, format_table
from .runner import RunPlan, export_scenario, run_batch, simulate_scenario
from .simulator import PROFILE_KINDS

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="accelaid", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("simulate", "simulate one scenario, write its dataset and run the filters"),
        ("replay", "run the filters over recorded CSV streams"),
        ("batch", "Monte-Carlo repetitions of a simulated scenario"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seed", type=_seed, help="overrides the config seed")
        p.add_argument("--variant", choices=(*VARIANTS, "both"), default="both")
        if name != "replay":
            p.add_argument("--profile", choices=PROFILE_KINDS)
        if name == "batch":
            p.add_argument("--reps", type=_positive, default=20)
            p.add_argument("--jobs", type=_positive, default=1)
        if name == "replay":
            p.add_argument("--data", type=Path, help="directory with imu.csv, gnss.csv[, truth.csv]")
    return parser


def _summary(outcomes) -> str:
    rows, lines = [], []
    for o in outcomes:
        row = o.row
        if row["prmse_baseline"] is not None and row["prmse_accel"] is not None:
            rows.append(ComparisonRow(str(row["trajectory"]), row["prmse_baseline"], row["prmse_accel"]))
        else:
            for v in VARIANTS:
                if row[f"prmse_{v}"] is not None:
                    lines.append(f"run {row['trajectory']}: PRMSE {v} = {row[f'prmse_{v}']:.2f} m")
    if rows:
        return format_table(rows)
    return "\n".join(lines) or "no truth available; estimates written without PRMSE"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s"
    )
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if getattr(args, "profile", None):
            overrides["profile"] = args.profile
        cfg = replace(cfg, **overrides).validate().resolved()
        variants = VARIANTS if args.variant == "both" else (args.variant,)

        if args.command == "replay":
            if args.data is not None:
                paths = [args.data / "imu.csv", args.data / "gnss.csv", args.data / "truth.csv"]
            else:
                if not (cfg.imu_path and cfg.gnss_path):
                    raise ConfigError({"imu_path": "replay needs --data or imu_path/gnss_path"})
                paths = [cfg.imu_path, cfg.gnss_path, cfg.truth_path or None]
            bundle = load_dataset(*paths)
            plan = RunPlan("replay", variants, 1, cfg, args.out, bundle=bundle)
        elif args.command == "simulate":
            if args.out is not None:
                export_scenario(simulate_scenario(cfg), args.out / "data")
            plan = RunPlan("simulate", variants, 1, cfg, args.out)
        else:
            plan = RunPlan("simulate", variants, args.reps, cfg, args.out, jobs=args.jobs)
    except (ConfigError, DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    try:
        outcomes = run_batch(plan)
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(_summary(outcomes))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
