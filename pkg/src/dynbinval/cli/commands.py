"""Experiment command handlers.

Each handler takes a validated :class:`ExperimentConfig` and returns the rows it
wants emitted plus an exit code; rendering and file output live in the app.
"""

from __future__ import annotations

import logging
import math
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Any, Callable, Dict, List

from dynbinval.config import ExperimentConfig
from dynbinval.services import analytic, dynbv, oracle
from dynbinval.services.bitpop import BitString, Population
from dynbinval.services.drift import (
    DriftEstimate,
    drift_surface,
    estimate_degenerate_drift,
    zero_count_for,
)
from dynbinval.services.ea import EaParams, run_to_optimum
from dynbinval.services.seeding import SeedStream, map_in_order, split_trials

__all__ = [
    "COLUMNS",
    "EXIT_CONFIG_ERROR",
    "EXIT_INVALID_ESTIMATE",
    "EXIT_OK",
    "EXIT_VERIFICATION_FAILED",
    "CommandResult",
    "HANDLERS",
    "cmd_analytic",
    "cmd_drift",
    "cmd_oracle_check",
    "cmd_runtime",
    "cmd_threshold",
]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_INVALID_ESTIMATE = 3

COLUMNS: Dict[str, List[str]] = {
    "drift": ["c", "eps", "n", "mu", "mean", "stderr", "trials", "aborted", "seed"],
    "analytic": ["c", "f0", "f1", "c0", "eps_star", "mu0"],
    "oracle-check": ["check", "r", "k", "expected", "observed", "passed"],
    "runtime": [
        "n",
        "mu",
        "c",
        "start_eps",
        "median_generations",
        "success_rate",
        "stderr",
        "runs",
        "budget",
        "seed",
    ],
    "threshold": [
        "fitness",
        "weights",
        "mu",
        "n",
        "eps",
        "c_low",
        "c_high",
        "reference",
        "steps",
        "trials",
        "stderr_low",
        "stderr_high",
        "seed",
    ],
}


@dataclass(slots=True)
class CommandResult:
    rows: List[Dict[str, Any]] = field(default_factory=list)
    exit_code: int = EXIT_OK


def cmd_drift(config: ExperimentConfig, threads: int = 1) -> CommandResult:
    """Degenerate drift over the ``n x c x epsilon`` grid.

    Cell ``(c_i, eps_j)`` at the ``h``-th string length draws from
    ``SeedStream(seed).child(h).child(i, j)``.
    """

    seed = config.require_seed()
    result = CommandResult()
    for h, n in enumerate(config.n_values):
        template = config.params(n=n, c=min(config.c_values))
        cells = drift_surface(
            config.c_values,
            config.epsilon_values,
            template,
            config.trials,
            SeedStream(seed).child(h),
            cap=config.cap,
            threads=threads,
        )
        for cell in cells:
            result.rows.append(_drift_row(cell.c, cell.epsilon, cell.estimate, seed))
            if not cell.estimate.valid:
                result.exit_code = EXIT_INVALID_ESTIMATE
    return result


def _drift_row(c: float, epsilon: float, estimate: DriftEstimate, seed: int) -> Dict[str, Any]:
    return {
        "c": c,
        "eps": epsilon,
        "n": estimate.params.n,
        "mu": estimate.params.mu,
        "mean": estimate.mean,
        "stderr": estimate.standard_error,
        "trials": estimate.trials,
        "aborted": estimate.aborted_trials,
        "seed": seed,
    }


def cmd_analytic(config: ExperimentConfig, threads: int = 1) -> CommandResult:
    """Pure evaluation of the drift coefficients over the ``c`` grid."""

    cfg = analytic.SeriesConfig(terms=config.series_terms)
    c0 = analytic.find_c0(cfg)
    logger.info("c0 = %.10f", c0)
    result = CommandResult()
    for c in config.c_values:
        coefficients = analytic.drift_coefficients(c, cfg)
        try:
            eps_star: float | None = analytic.epsilon_star(c, cfg)
        except ValueError:
            eps_star = None
        result.rows.append(
            {
                "c": c,
                "f0": coefficients.f0,
                "f1": coefficients.f1,
                "c0": c0,
                "eps_star": eps_star,
                "mu0": analytic.mu_zero(c),
            }
        )
    return result


def _fractions(values: tuple[Fraction, ...] | Fraction) -> str:
    if isinstance(values, Fraction):
        return str(values)
    return ",".join(str(value) for value in values)


def cmd_oracle_check(config: ExperimentConfig, threads: int = 1) -> CommandResult:
    """Compare every closed-form selection probability with exact enumeration."""

    result = CommandResult()

    def record(check: str, r: int, k: int | None, expected: Any, observed: Any) -> None:
        passed = expected == observed
        result.rows.append(
            {
                "check": check,
                "r": r,
                "k": k,
                "expected": _fractions(expected),
                "observed": _fractions(observed),
                "passed": passed,
            }
        )
        if not passed:
            logger.error("%s failed at r=%s k=%s: %s != %s", check, r, k, expected, observed)
            result.exit_code = EXIT_VERIFICATION_FAILED

    for r in range(1, config.r_max + 1):
        for k in range(1, config.k_max + 1):
            if r + k + 2 > oracle.MAX_DIFF_POSITIONS:
                continue
            # The enumeration returns members as (x0, x_r, x_k); the closed form
            # lists (x_r, x_k, x0).
            a0, ar, ak = oracle.exact_discard_distribution(oracle.CategoryProfile.state_A(r, k))
            record("discard_A", r, k, analytic.discard_probs_A(r, k), (ar, ak, a0))
            record(
                "discard_B",
                r,
                k,
                analytic.discard_probs_B(r, k),
                oracle.exact_discard_distribution(oracle.CategoryProfile.state_B(r, k)),
            )
            p_r, p_k, p_0 = analytic.discard_probs_A(r, k)
            weighted_a = (
                p_r * analytic.delta_i(2, r, k)
                + p_k * analytic.delta_i(3, r, k)
                + p_0 * analytic.delta_i(4, r, k)
            )
            record("delta_A", r, k, analytic.delta_A(r, k), weighted_a)
            q_0, q_r, q_rk = analytic.discard_probs_B(r, k)
            weighted_b = (
                q_0 * analytic.delta_i(7, r, k)
                + q_r * analytic.delta_i(8, r, k)
                + q_rk * analytic.delta_i(9, r, k)
            )
            record("delta_B", r, k, analytic.delta_B(r, k), weighted_b)

    for r in range(1, config.accept_r_max + 1):
        x0_discarded = oracle.exact_discard_distribution(oracle.CategoryProfile.pair(r))[0]
        record("acceptance", r, None, dynbv.accept_probability_check(r), x0_discarded)

    for r in range(1, config.symmetry_r_max + 1):
        report = oracle.symmetry_probabilities(r)
        record("symmetry", r, None, report.accepted * report.marker_late, report.joint)

    logger.info(
        "Oracle check: %d of %d comparisons passed",
        sum(1 for row in result.rows if row["passed"]),
        len(result.rows),
    )
    return result


def _start_population(params: EaParams, start_eps: float | None, rng: Any) -> Population:
    if start_eps is None:
        ones = int.from_bytes(rng.bytes((params.n + 7) // 8), "little") & ((1 << params.n) - 1)
        x = BitString.from_mask(params.n, ones)
    else:
        m = zero_count_for(start_eps, params.n)
        x = BitString.with_zeros(params.n, rng.choice(params.n, m, replace=False).tolist())
    return Population.degenerate(x, params.mu)


def _runtime_batch(
    run_indices: range, params: EaParams, start_eps: float | None, budget: int, seed: SeedStream
) -> List[tuple[int, bool]]:
    outcomes = []
    for index in run_indices:
        rng = seed.child(index).generator()
        run = run_to_optimum(_start_population(params, start_eps, rng), params, rng, budget)
        outcomes.append((run.generations_used, run.reached_optimum))
    return outcomes


def cmd_runtime(config: ExperimentConfig, threads: int = 1) -> CommandResult:
    """Repeated runs to the optimum with budget ``budget_factor * n * ln n``.

    Runs that exhaust the budget count with the full budget in the median.
    """

    seed = config.require_seed()
    result = CommandResult()
    for h, n in enumerate(config.n_values):
        params = config.params(n=n)
        budget = math.ceil(config.budget_factor * n * math.log(n))
        work = partial(
            _runtime_batch,
            params=params,
            start_eps=config.start_eps,
            budget=budget,
            seed=SeedStream(seed).child(h),
        )
        outcomes = [
            outcome
            for batch in map_in_order(work, split_trials(config.runs, batch_size=1), threads)
            for outcome in batch
        ]
        successes = sum(1 for _, reached in outcomes if reached)
        rate = successes / len(outcomes)
        median = statistics.median(generations for generations, _ in outcomes)
        logger.info(
            "n=%d mu=%d c=%g: %d/%d runs reached the optimum, median %g generations",
            n,
            params.mu,
            params.c,
            successes,
            len(outcomes),
            median,
        )
        result.rows.append(
            {
                "n": n,
                "mu": params.mu,
                "c": params.c,
                "start_eps": config.start_eps,
                "median_generations": float(median),
                "success_rate": rate,
                "stderr": math.sqrt(rate * (1.0 - rate) / len(outcomes)),
                "runs": len(outcomes),
                "budget": budget,
                "seed": seed,
            }
        )
    return result


@dataclass(slots=True)
class _SignedPoint:
    c: float
    sign: int
    estimate: DriftEstimate


def _signed_drift(
    params: EaParams, epsilon: float, config: ExperimentConfig, seed: SeedStream, threads: int
) -> _SignedPoint:
    """Drift sign at ``params.c``, adding trials until ``|mean| > 3 stderr``."""

    trials = min(config.trials, config.max_trials)
    while True:
        estimate = estimate_degenerate_drift(params, epsilon, trials, seed, cap=config.cap, threads=threads)
        margin = 3.0 * estimate.standard_error
        if estimate.mean > margin:
            return _SignedPoint(params.c, 1, estimate)
        if estimate.mean < -margin:
            return _SignedPoint(params.c, -1, estimate)
        if trials >= config.max_trials:
            logger.warning(
                "Drift sign at c=%.6g undecided after %d trials (mean %.3g, stderr %.3g)",
                params.c,
                trials,
                estimate.mean,
                estimate.standard_error,
            )
            return _SignedPoint(params.c, 1 if estimate.mean >= 0 else -1, estimate)
        trials = min(2 * trials, config.max_trials)


def _reference_threshold(config: ExperimentConfig) -> float | None:
    if config.fitness == "linear" and config.weights is not None:
        if config.weights.kind == "exponential":
            return analytic.reference_thresholds()["exponential"]
        if config.weights.kind == "geometric":
            return analytic.geometric_threshold(config.weights.p)
        return None
    if config.mu == 1:
        return analytic.find_c0_mu1()
    if config.mu == 2:
        return analytic.find_c0()
    return None


def cmd_threshold(config: ExperimentConfig, threads: int = 1) -> CommandResult:
    """Bisect the mutation parameter on the sign of the Monte Carlo drift.

    Point ``s`` of the search draws from ``SeedStream(seed).child(s)``; the ends
    of the initial interval are points 0 and 1.
    """

    seed = config.require_seed()
    stream = SeedStream(seed)
    n, epsilon = config.n, config.epsilon
    if not config.c_low < config.c_high:
        raise ValueError(f"Empty threshold interval [{config.c_low}, {config.c_high}]")
    if config.c_high >= n:
        raise ValueError(f"c_high={config.c_high} must be smaller than n={n}")

    def evaluate(c: float, step: int) -> _SignedPoint:
        return _signed_drift(config.params(c=c), epsilon, config, stream.child(step), threads)

    low = evaluate(config.c_low, 0)
    high = evaluate(config.c_high, 1)
    if low.sign <= 0 or high.sign >= 0:
        raise analytic.BracketError(
            f"Drift does not change sign from positive to negative on [{config.c_low}, {config.c_high}]: "
            f"{low.estimate.mean:.4g} at c_low, {high.estimate.mean:.4g} at c_high"
        )
    total_trials = low.estimate.trials + high.estimate.trials
    step = 2
    while high.c - low.c > config.tolerance:
        point = evaluate((low.c + high.c) / 2.0, step)
        total_trials += point.estimate.trials
        if point.sign > 0:
            low = point
        else:
            high = point
        logger.info("Threshold bracket [%.6g, %.6g] after %d points", low.c, high.c, step + 1)
        step += 1

    weights = config.weights.model_dump_json() if config.weights is not None else None
    row = {
        "fitness": config.fitness,
        "weights": weights,
        "mu": config.mu,
        "n": n,
        "eps": epsilon,
        "c_low": low.c,
        "c_high": high.c,
        "reference": _reference_threshold(config),
        "steps": step,
        "trials": total_trials,
        "stderr_low": low.estimate.standard_error,
        "stderr_high": high.estimate.standard_error,
        "seed": seed,
    }
    result = CommandResult(rows=[row])
    if not (low.estimate.valid and high.estimate.valid):
        result.exit_code = EXIT_INVALID_ESTIMATE
    return result


HANDLERS: Dict[str, Callable[[ExperimentConfig, int], CommandResult]] = {
    "drift": cmd_drift,
    "analytic": cmd_analytic,
    "oracle-check": cmd_oracle_check,
    "runtime": cmd_runtime,
    "threshold": cmd_threshold,
}
