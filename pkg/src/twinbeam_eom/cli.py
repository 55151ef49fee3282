"""Command-line interface for twinbeam-eom."""

import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import Callable, Dict, List, Optional

from .config import SCENARIOS, ScenarioConfig, config_to_dict, load_config
from .errors import ConfigurationError, FileProcessingError, TwinBeamError, ValidationFailure
from .scenarios import ScenarioResult, analyze_traces, calibrate_shot_noise, export_traces, run_scenario

logger = logging.getLogger("twinbeam_eom")
if not logger.handlers:
    logging.basicConfig(level=logging.INFO, format="%(message)s")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VALIDATION = 2
EXIT_IO = 3


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "-c",
        "--config",
        help="Scenario config file (.json, .yaml or .yml); built-in defaults when omitted",
    )
    parser.add_argument(
        "--seed",
        type=int,
        help="Override the config seed",
    )
    parser.add_argument(
        "--out",
        help="Override the output directory",
    )
    parser.add_argument(
        "--scenario",
        choices=SCENARIOS,
        help="Override the scenario id",
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=1,
        help="Threads used for trace synthesis; results do not depend on it (default: 1)",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="Log debug messages",
    )


def add_spectrum_arguments(parser: argparse.ArgumentParser) -> None:
    add_common_arguments(parser)
    parser.add_argument(
        "--traces",
        required=True,
        help="Photocurrent trace file with channels i_p and i_c (JSON sidecar alongside)",
    )


def create_argument_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Simulate electro-optic phase modulation of entangled twin beams and validate the results"
    )
    subparsers = parser.add_subparsers(dest="command")
    commands = {
        "run": "Run the configured scenario and write its output bundle",
        "validate": "Compare closed-form, exact and Monte-Carlo pipelines",
        "shot-calibrate": "Measure and write the shot-noise reference spectra",
        "export-traces": "Write the configured quadrature and photocurrent traces",
        "print-config": "Print the configuration with every default filled in",
    }
    for name, help_text in commands.items():
        add_common_arguments(subparsers.add_parser(name, help=help_text))
    add_spectrum_arguments(subparsers.add_parser("spectrum", help="Joint-noise spectra of imported photocurrent traces"))
    return parser


def parse_cli_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    if argv is None:
        argv = sys.argv[1:]

    if not argv:
        argv = ["run"]
    elif argv[0].startswith("-") and argv[0] not in {"-h", "--help"}:
        argv = ["run"] + argv

    parser = create_argument_parser()
    return parser.parse_args(argv)


def create_config_from_args(args: argparse.Namespace) -> ScenarioConfig:
    config = load_config(args.config) if args.config else ScenarioConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.scenario is not None:
        overrides["scenario"] = args.scenario
    if args.command == "validate":
        overrides["scenario"] = "validate_pipelines"
    if args.workers < 1:
        raise ConfigurationError(f"--workers: must be at least 1, got {args.workers}")
    return replace(config, **overrides) if overrides else config


def _run(config: ScenarioConfig, args: argparse.Namespace) -> ScenarioResult:
    return run_scenario(config, workers=args.workers)


def _shot_calibrate(config: ScenarioConfig, args: argparse.Namespace) -> ScenarioResult:
    return calibrate_shot_noise(config, workers=args.workers)


def _export_traces(config: ScenarioConfig, args: argparse.Namespace) -> ScenarioResult:
    return export_traces(config, workers=args.workers)


def _spectrum(config: ScenarioConfig, args: argparse.Namespace) -> ScenarioResult:
    return analyze_traces(config, args.traces, workers=args.workers)


COMMANDS: Dict[str, Callable[[ScenarioConfig, argparse.Namespace], ScenarioResult]] = {
    "run": _run,
    "validate": _run,
    "shot-calibrate": _shot_calibrate,
    "export-traces": _export_traces,
    "spectrum": _spectrum,
}


def output_results(result: ScenarioResult) -> None:
    failed = [check for check in result.checks if not check.passed]
    logger.info(f"Wrote {len(result.files)} file(s) to {result.output_dir}")
    logger.info(f"Checks: {len(result.checks) - len(failed)}/{len(result.checks)} passed")
    if failed:
        raise ValidationFailure(
            f"{len(failed)} check(s) failed: {', '.join(check.name for check in failed)}. "
            f"See {result.output_dir / 'summary.txt'}"
        )


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = parse_cli_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG

    logger.setLevel(logging.DEBUG if args.verbose else logging.INFO)

    try:
        config = create_config_from_args(args)
        if args.command == "print-config":
            print(json.dumps(config_to_dict(config), indent=2, sort_keys=True))
            return EXIT_OK
        output_results(COMMANDS[args.command](config, args))
    except ConfigurationError as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except ValidationFailure as exc:
        logger.error(f"Validation failed: {exc}")
        return EXIT_VALIDATION
    except FileProcessingError as exc:
        logger.error(f"I/O error: {exc}")
        return EXIT_IO
    except TwinBeamError as exc:
        logger.error(f"Pipeline error: {exc}")
        return EXIT_CONFIG
    except Exception as exc:
        logger.error(f"Unexpected error: {exc}")
        return EXIT_CONFIG

    return EXIT_OK
