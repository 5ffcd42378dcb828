"""Command-line entry point for dynbinval experiments."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Sequence

from pydantic import ValidationError

from dynbinval.cli.commands import (
    COLUMNS,
    EXIT_CONFIG_ERROR,
    EXIT_INVALID_ESTIMATE,
    HANDLERS,
    CommandResult,
)
from dynbinval.config import COMMANDS, DEFAULT_CONFIG_PATH, ExperimentConfig, ExperimentsFile
from dynbinval.resultstore import render, write_output
from dynbinval.services.drift import EstimationError
from dynbinval.services.dynbv import WeightDistribution

__all__ = ["build_parser", "load_config", "main"]

logger = logging.getLogger(__name__)


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"Expected comma-separated numbers, got {text!r}") from exc


def _int_list(text: str) -> List[int]:
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"Expected comma-separated integers, got {text!r}") from exc


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"Experiment file (default: {DEFAULT_CONFIG_PATH})")
    common.add_argument("--seed", type=int, help="Master seed")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per cell")
    common.add_argument("--threads", type=int, help="Worker processes")
    common.add_argument("--out", help="Output file; bare names go below results/")
    common.add_argument("--format", choices=("csv", "json", "svg"), help="Output format")
    common.add_argument("--n", type=int, help="String length")
    common.add_argument("--mu", type=int, help="Population size")
    common.add_argument("--c", type=float, help="Mutation parameter")
    common.add_argument("--epsilon", type=float, help="Relative distance from the optimum")
    common.add_argument("--c-grid", dest="c_grid", type=_float_list, help="Comma-separated c values")
    common.add_argument("--eps-grid", dest="epsilon_grid", type=_float_list, help="Comma-separated epsilons")
    common.add_argument("--n-grid", dest="n_grid", type=_int_list, help="Comma-separated string lengths")
    common.add_argument("--cap", type=int, help="Generation cap per degeneration run")
    common.add_argument("--crossover-prob", dest="crossover_prob", type=float, help="GA crossover probability")
    common.add_argument("--fitness", choices=("dynbv", "linear"), help="Fitness family")
    common.add_argument(
        "--weights",
        choices=("exponential", "geometric", "uniform", "point_mass"),
        help="Weight law of the dynamic linear fitness",
    )
    common.add_argument("--weight-rate", dest="weight_rate", type=float, help="Exponential rate")
    common.add_argument("--weight-p", dest="weight_p", type=float, help="Geometric success probability")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="dynbinval", description="Drift experiments for the (mu+1)-EA on Dynamic BinVal."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("drift", parents=[common], help="Degenerate drift over a (c, epsilon) grid")

    analytic = commands.add_parser("analytic", parents=[common], help="Drift coefficients f0, f1")
    analytic.add_argument("--terms", dest="series_terms", type=int, help="Series truncation")

    oracle = commands.add_parser("oracle-check", parents=[common], help="Exact checks of selection formulas")
    oracle.add_argument("--r-max", dest="r_max", type=int)
    oracle.add_argument("--k-max", dest="k_max", type=int)

    runtime = commands.add_parser("runtime", parents=[common], help="Runs to the optimum")
    runtime.add_argument("--runs", type=int)
    runtime.add_argument("--budget-factor", dest="budget_factor", type=float)
    runtime.add_argument("--start-eps", dest="start_eps", type=float)

    threshold = commands.add_parser("threshold", parents=[common], help="Bisection on the drift sign")
    threshold.add_argument("--c-low", dest="c_low", type=float)
    threshold.add_argument("--c-high", dest="c_high", type=float)
    threshold.add_argument("--tolerance", type=float)
    threshold.add_argument("--max-trials", dest="max_trials", type=int)
    return parser


_NON_CONFIG_ARGS = {"command", "config", "weights", "weight_rate", "weight_p"}


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Read the command's section and apply every flag given on the command line."""

    if args.config is None and not DEFAULT_CONFIG_PATH.exists():
        config = ExperimentConfig(command=args.command)
    else:
        config = ExperimentsFile.from_file(args.config).section(args.command)

    overrides: Dict[str, Any] = {
        key: value for key, value in vars(args).items() if key not in _NON_CONFIG_ARGS
    }
    if args.weights is not None or args.weight_rate is not None or args.weight_p is not None:
        base = config.weights.model_dump() if config.weights is not None else {"kind": "exponential"}
        if args.weights is not None:
            base["kind"] = args.weights
        if args.weight_rate is not None:
            base["rate"] = args.weight_rate
        if args.weight_p is not None:
            base["p"] = args.weight_p
        overrides["weights"] = WeightDistribution.model_validate(base)
    return config.with_overrides(**overrides)


def _threads(config: ExperimentConfig) -> int:
    if config.threads is not None:
        return config.threads
    raw = os.getenv("DYNBINVAL_THREADS")
    if not raw:
        return 1
    try:
        threads = int(raw)
    except ValueError as exc:
        raise ValueError(f"DYNBINVAL_THREADS must be an integer, got {raw!r}") from exc
    if threads < 1:
        raise ValueError(f"DYNBINVAL_THREADS must be positive, got {threads}")
    return threads


def _emit(command: str, result: CommandResult, config: ExperimentConfig) -> None:
    if config.format == "svg" and command != "drift":
        raise ValueError("SVG output is only available for the drift command")
    text = render(result.rows, COLUMNS[command], config.format)
    if config.out is None:
        sys.stdout.write(text)
        return
    path = write_output(text, config.out)
    logger.info("Wrote %d rows to %s", len(result.rows), path)


def main(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, run one experiment command and return its exit code."""

    logging.basicConfig(
        level=os.getenv("DYNBINVAL_LOG_LEVEL", "INFO").upper(),
        format="%(levelname)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    assert args.command in COMMANDS

    try:
        config = load_config(args)
        result = HANDLERS[args.command](config, _threads(config))
        _emit(args.command, result, config)
    except EstimationError as exc:
        logger.error("Estimation failed: %s", exc)
        return EXIT_INVALID_ESTIMATE
    except (ValidationError, ValueError, FileNotFoundError) as exc:
        logger.error("Could not run %s: %s", args.command, exc)
        return EXIT_CONFIG_ERROR

    if result.exit_code == EXIT_INVALID_ESTIMATE:
        logger.error("At least one estimate failed its validity check")
    return result.exit_code
