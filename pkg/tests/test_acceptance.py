"""Long Monte Carlo experiments checked against the closed-form results.

Run with ``pytest --runslow``; each case takes minutes.
"""

from __future__ import annotations

import math
import os

import pytest

from dynbinval.cli.commands import cmd_runtime, cmd_threshold
from dynbinval.config import ExperimentConfig
from dynbinval.services.analytic import delta_F_first, f0, f1, hat_p
from dynbinval.services.drift import (
    StateSpec,
    conditional_eject_frequency,
    estimate_degenerate_drift,
    estimate_state_drift,
    estimate_transition_profile,
)
from dynbinval.services.dynbv import WeightDistribution
from dynbinval.services.ea import EaParams
from dynbinval.services.oracle import exact_tiny_chain_drift
from dynbinval.services.seeding import SeedStream

pytestmark = pytest.mark.slow

THREADS = int(os.getenv("DYNBINVAL_THREADS", "4"))
SEED = SeedStream(20240611)


@pytest.mark.parametrize("mu,r", [(2, 1), (2, 3), (3, 2), (5, 2)])
def test_eject_frequency_matches_formula(mu: int, r: int) -> None:
    n = 10_000
    spec = StateSpec(kind="F", n=n, m=10, r=r, mu=mu)

    result = conditional_eject_frequency(
        spec, EaParams(n=n, mu=mu, c=1.0), 100_000, SEED.child(1, mu, r), threads=THREADS
    )

    assert abs(result.frequency - float(hat_p(mu, r))) <= 3 * result.standard_error


@pytest.mark.parametrize("r", [1, 2, 3, 5])
def test_pair_state_drift_matches_first_order(r: int) -> None:
    n = 10_000
    spec = StateSpec(kind="F", n=n, m=10, r=r, mu=2)

    estimate = estimate_state_drift(spec, EaParams(n=n, mu=2, c=1.0), 100_000, SEED.child(2, r), threads=THREADS)

    assert abs(estimate.mean - float(delta_F_first(2, r))) <= 3 * estimate.standard_error + 0.02


@pytest.mark.parametrize("n,m", [(4, 2), (2, 1)])
def test_simulator_matches_exact_chain(n: int, m: int) -> None:
    exact = exact_tiny_chain_drift(n=n, mu=2, c=1, m=m)

    estimate = estimate_degenerate_drift(
        EaParams(n=n, mu=2, c=1.0), m / n, 1_000_000, SEED.child(3, n), threads=THREADS
    )

    assert abs(estimate.mean - float(exact.expected_change)) <= 3 * estimate.standard_error


@pytest.mark.parametrize("c", [1.0, 2.0, 2.2])
def test_second_order_prediction(c: float) -> None:
    eps, n = 0.005, 3000
    predicted = f0(c) + eps * f1(c)

    estimate = estimate_degenerate_drift(
        EaParams(n=n, mu=2, c=c), eps, 400_000, SEED.child(4, int(c * 100)), threads=THREADS
    )

    observed = estimate.mean / eps
    assert abs(observed - predicted) <= 3 * estimate.standard_error / eps + 0.1 * abs(predicted)


def _crossing(c: float, epsilons: list[float]) -> float:
    params = EaParams(n=3000, mu=2, c=c)
    for j, eps in enumerate(epsilons):
        estimate = estimate_degenerate_drift(params, eps, 100_000, SEED.child(5, int(c * 100), j), threads=THREADS)
        if estimate.mean < -3 * estimate.standard_error:
            return eps
    return math.inf


def test_drift_sign_structure() -> None:
    near = estimate_degenerate_drift(EaParams(n=3000, mu=2, c=2.2), 0.01, 200_000, SEED.child(5, 0), threads=THREADS)
    assert near.mean > 3 * near.standard_error

    far = EaParams(n=3000, mu=2, c=2.4)
    for j, eps in enumerate((0.05, 0.1)):
        estimate = estimate_degenerate_drift(far, eps, 200_000, SEED.child(5, 1, j), threads=THREADS)
        assert estimate.mean < -3 * estimate.standard_error

    # No crossing below 0.3 at c = 2.0 or 2.2, where f1 is still positive.
    epsilons = [0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3]
    crossings = [_crossing(c, epsilons) for c in (2.0, 2.2, 2.4)]

    assert crossings[2] <= 0.1
    assert crossings[0] >= crossings[1] >= crossings[2]


def test_large_population_has_positive_drift() -> None:
    large = estimate_degenerate_drift(EaParams(n=2000, mu=10, c=2.0), 0.02, 100_000, SEED.child(6, 10), threads=THREADS)
    single = estimate_degenerate_drift(EaParams(n=2000, mu=1, c=2.0), 0.02, 100_000, SEED.child(6, 1), threads=THREADS)

    assert large.mean > 3 * large.standard_error
    assert single.mean < -3 * single.standard_error


@pytest.mark.parametrize(
    "overrides,target,width",
    [
        ({"fitness": "dynbv"}, 1.59, 0.1),
        ({"fitness": "linear", "weights": WeightDistribution(kind="exponential")}, 2.0, 0.15),
        ({"fitness": "linear", "weights": WeightDistribution(kind="geometric", p=0.5)}, 3.0, 0.2),
    ],
)
def test_single_parent_thresholds(overrides: dict, target: float, width: float) -> None:
    config = ExperimentConfig(
        n=3000, mu=1, epsilon=0.005, seed=7, trials=20_000, max_trials=400_000, tolerance=0.05, **overrides
    )

    (row,) = cmd_threshold(config, THREADS).rows

    assert row["c_low"] <= target + width
    assert row["c_high"] >= target - width


def test_runtime_scales_like_n_log_n() -> None:
    config = ExperimentConfig(mu=5, c=1.0, n_grid=[100, 200, 400, 800], runs=100, start_eps=0.1, seed=11)

    rows = cmd_runtime(config, THREADS).rows

    assert all(row["success_rate"] >= 0.95 for row in rows)
    ratios = [row["median_generations"] / (row["n"] * math.log(row["n"])) for row in rows]
    assert max(ratios) <= 2 * min(ratios)


def test_multi_zero_flips_scale_quadratically() -> None:
    params = EaParams(n=2000, mu=2, c=2.0)
    trials = 1_000_000

    wide = estimate_transition_profile(params, 0.04, trials, SEED.child(8, 4), threads=THREADS)
    narrow = estimate_transition_profile(params, 0.02, trials, SEED.child(8, 2), threads=THREADS)

    assert narrow.multi_zero_flips > 100
    ratio = wide.multi_zero_flip_fraction / narrow.multi_zero_flip_fraction
    error = ratio * math.sqrt(1 / wide.multi_zero_flips + 1 / narrow.multi_zero_flips)
    # m(m - 1) with m = 80 and 40 zero-bits gives 4.05 rather than 4.
    assert abs(ratio - 4) <= 3 * error + 0.5
