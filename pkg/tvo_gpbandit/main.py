#!/usr/bin/env python3
"""
TVO GP-bandit experiment runner
Trains discrete and Gaussian latent variable models with adaptive TVO schedules
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from tvo_gpbandit.core.config import settings
from tvo_gpbandit.core.errors import (
    ConfigError,
    InvalidArgumentError,
    NumericError,
    TVOBanditError,
)
from tvo_gpbandit.core.log import configure_logging
from tvo_gpbandit.experiments.artifacts import write_json
from tvo_gpbandit.experiments.runner import ExperimentRunner
from tvo_gpbandit.experiments.schema import load_config
from tvo_gpbandit.models import fixtures

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def parse_seeds(value: str) -> List[int]:
    try:
        seeds = [int(part) for part in value.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(
            f"seeds must be comma-separated integers: {value!r}"
        ) from e
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvo-gpbandit",
        description="Run TVO training, regret and bound experiments from a JSON config",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "Run the experiment described by the config"),
        ("ablate", "Run the toggle cross-product of the config as an ablation"),
    ):
        command = commands.add_parser(name, help=help_text)
        command.add_argument("config", help="Path to the experiment config JSON")
        command.add_argument(
            "--jobs",
            type=int,
            default=None,
            help="Seeds run concurrently (default: $TVO_GPBANDIT_JOBS or 1)",
        )
        command.add_argument(
            "--out",
            default=None,
            help="Run directory (default: config output_dir or $TVO_GPBANDIT_OUT_DIR/<experiment>)",
        )
        command.add_argument(
            "--seed-override",
            type=parse_seeds,
            default=None,
            help="Comma-separated seeds replacing the config's seeds, e.g. 1,2,3",
        )

    fixture = commands.add_parser(
        "fixture", help="Write a fixture JSON with its observations pinned in a data array"
    )
    fixture.add_argument("name", help="Shipped fixture name or path to a fixture JSON")
    fixture.add_argument("--out", required=True, help="Path of the fixture JSON to write")
    return parser


def export_fixture(name: str, out: str) -> int:
    try:
        path = fixtures.save_dataset(out, fixtures.read_spec(name))
    except (InvalidArgumentError, OSError) as e:
        print(f"❌ Could not export fixture: {e}")
        print(json.dumps({"field": "name", "message": str(e)}), file=sys.stderr)
        return EXIT_CONFIG
    print(f"✅ Fixture {name!r} written to {path}")
    return EXIT_OK


def report_error(out_dir: Path, exit_code: int, kind: str, errors: list) -> None:
    """Write ``error.json`` and echo it on stderr"""
    report = {"exit_code": exit_code, "kind": kind, "errors": errors}
    try:
        write_json(out_dir / "error.json", report)
    except OSError as e:
        logger.warning(f"could not write error report to {out_dir}: {e}")
    print(json.dumps(report, sort_keys=True, default=str), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(settings)
    if args.command == "fixture":
        return export_fixture(args.name, args.out)

    fallback_dir = Path(args.out) if args.out else Path(settings.OUT_DIR)
    try:
        config = load_config(args.config)
        runner = ExperimentRunner(
            config, out_dir=args.out, jobs=args.jobs, seeds=args.seed_override
        )
    except ConfigError as e:
        print(f"❌ Invalid config: {e}")
        report_error(fallback_dir, EXIT_CONFIG, "config", e.errors)
        return EXIT_CONFIG
    except InvalidArgumentError as e:
        print(f"❌ Invalid config: {e}")
        report_error(fallback_dir, EXIT_CONFIG, "config", [{"field": "<root>", "message": str(e)}])
        return EXIT_CONFIG

    try:
        if args.command == "ablate":
            runner.ablate()
        else:
            runner.run()
    except NumericError as e:
        print(f"❌ Numeric failure: {e}")
        report_error(
            runner.out_dir,
            EXIT_NUMERIC,
            "numeric",
            [{"message": str(e), "diagnostics": e.diagnostics}],
        )
        return EXIT_NUMERIC
    except ConfigError as e:
        print(f"❌ Invalid config: {e}")
        report_error(runner.out_dir, EXIT_CONFIG, "config", e.errors)
        return EXIT_CONFIG
    except TVOBanditError as e:
        print(f"❌ Invalid config: {e}")
        report_error(runner.out_dir, EXIT_CONFIG, "config", [{"field": "<run>", "message": str(e)}])
        return EXIT_CONFIG

    print("\n🎯 Next steps:")
    print(f"  ls {runner.out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
