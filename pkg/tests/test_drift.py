from __future__ import annotations

from unittest.mock import patch

import numpy as np
import pytest

from dynbinval.services import drift
from dynbinval.services.bitpop import BitString
from dynbinval.services.drift import (
    DriftAccumulator,
    DriftEstimate,
    EstimationError,
    StateSpec,
    conditional_eject_frequency,
    construct_state,
    drift_surface,
    estimate_degenerate_drift,
    estimate_state_contribution,
    estimate_state_drift,
    estimate_transition_profile,
    zero_count_for,
)
from dynbinval.services.ea import EaParams
from dynbinval.services.seeding import SeedStream, map_in_order, split_trials


def test_zero_count_for_floors_with_tolerance() -> None:
    assert zero_count_for(0.005, 3000) == 15
    assert zero_count_for(0.1, 30) == 3
    assert zero_count_for(0.0, 30) == 0
    with pytest.raises(ValueError):
        zero_count_for(-0.1, 30)


def test_split_trials_covers_range_in_order() -> None:
    batches = split_trials(4_500, batch_size=2_000)

    assert [(b.start, b.stop) for b in batches] == [(0, 2_000), (2_000, 4_000), (4_000, 4_500)]
    with pytest.raises(ValueError):
        split_trials(0)


def test_seed_stream_children_are_reproducible() -> None:
    stream = SeedStream(42)

    a = stream.child(3, 1).generator().random(4)
    b = SeedStream(42).child(3).child(1).generator().random(4)
    c = stream.child(1, 3).generator().random(4)

    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ValueError):
        SeedStream(-1)


@pytest.mark.parametrize(
    "spec",
    [
        {"kind": "F", "n": 10, "m": 0, "r": 1},
        {"kind": "F", "n": 10, "m": 3, "r": 8},
        {"kind": "F", "n": 10, "m": 3, "r": 1, "mu": 1},
        {"kind": "A", "n": 10, "m": 1, "r": 1, "k": 1},
        {"kind": "B", "n": 10, "m": 3, "r": 4, "k": 4},
        {"kind": "A", "n": 10, "m": 3, "r": 1, "k": 1, "mu": 3},
        {"kind": "degenerate", "n": 5, "m": 6},
    ],
)
def test_state_spec_rejects_infeasible_states(spec: dict) -> None:
    with pytest.raises(ValueError):
        StateSpec(**spec)


def test_construct_f_state_structure() -> None:
    spec = StateSpec(kind="F", n=40, m=5, r=3, mu=4)
    population = construct_state(spec, np.random.default_rng(0))

    x0 = population.members[0]
    x_r = population.members[-1]
    assert population.mu == 4
    assert all(member == x0 for member in population.members[:3])
    assert x0.zero_count == 5
    assert (x_r.ones & ~x0.ones).bit_count() == 1
    assert (x0.ones & ~x_r.ones).bit_count() == 3


@pytest.mark.parametrize("kind", ["A", "B"])
def test_construct_three_member_states(kind: str) -> None:
    spec = StateSpec(kind=kind, n=40, m=4, r=2, k=3)
    x0, x_r, third = construct_state(spec, np.random.default_rng(1)).members

    base = x0 if kind == "A" else x_r
    assert (third.ones & ~base.ones).bit_count() == 1
    assert (base.ones & ~third.ones).bit_count() == 3
    assert (x_r.ones & ~x0.ones).bit_count() == 1
    assert (x0.ones & ~x_r.ones).bit_count() == 2
    # The two gained bits are different zero positions of x0.
    assert (x_r.ones & third.ones & x0.zeros) == (x_r.ones & x0.zeros if kind == "B" else 0)


def test_accumulator_merge_and_moments() -> None:
    left, right = DriftAccumulator(), DriftAccumulator()
    for value in (1, 0, -1):
        left.add(value)
    for value in (2, 2):
        right.add(value)
    right.aborted = 1

    merged = left.merge(right)

    assert merged.count == 5 and merged.aborted == 1
    assert merged.mean == pytest.approx(0.8)
    assert merged.standard_error == pytest.approx(np.std([1, 0, -1, 2, 2], ddof=1) / np.sqrt(5))


def test_empty_accumulator_raises() -> None:
    acc = DriftAccumulator(aborted=3)

    with pytest.raises(EstimationError):
        DriftEstimate.from_accumulator(acc, 0.1, EaParams(n=10, c=1.0))


def test_estimate_validity_flag() -> None:
    params = EaParams(n=10, c=1.0)
    valid = DriftEstimate(mean=0.0, standard_error=0.0, trials=1_000, aborted_trials=1, epsilon=0.1, params=params)
    invalid = valid.model_copy(update={"aborted_trials": 2})

    assert valid.valid
    assert not invalid.valid


def test_zero_epsilon_gives_zero_drift() -> None:
    params = EaParams(n=30, mu=2, c=1.0)

    estimate = estimate_degenerate_drift(params, 0.0, 200, SeedStream(5))

    assert estimate.mean == 0.0
    assert estimate.trials == 200


def test_degenerate_drift_is_reproducible_across_thread_counts() -> None:
    params = EaParams(n=60, mu=2, c=1.0)

    serial = estimate_degenerate_drift(params, 0.1, 2_500, SeedStream(7))
    with patch.object(drift, "map_in_order", side_effect=lambda fn, batches, threads: [fn(b) for b in reversed(batches)][::-1]):
        shuffled = estimate_degenerate_drift(params, 0.1, 2_500, SeedStream(7), threads=4)

    assert serial == shuffled


def test_small_c_drift_is_positive() -> None:
    params = EaParams(n=100, mu=2, c=0.5)

    estimate = estimate_degenerate_drift(params, 0.2, 2_000, SeedStream(3))

    assert estimate.mean > 3 * estimate.standard_error


def test_state_drift_checks_parameters() -> None:
    spec = StateSpec(kind="F", n=50, m=3, r=1, mu=2)

    with pytest.raises(ValueError):
        estimate_state_drift(spec, EaParams(n=60, c=1.0), 10, SeedStream(0))
    with pytest.raises(ValueError):
        estimate_state_drift(spec, EaParams(n=50, mu=3, c=1.0), 10, SeedStream(0))


def test_pre_selection_states_reach_degenerate_population() -> None:
    params = EaParams(n=60, mu=2, c=1.0)
    spec = StateSpec(kind="A", n=60, m=4, r=1, k=1)

    estimate = estimate_state_drift(spec, params, 300, SeedStream(9))

    assert estimate.trials == 300
    assert -3.0 <= estimate.mean <= 2.0


def test_drift_surface_cells_match_direct_estimates() -> None:
    template = EaParams(n=40, mu=2, c=1.0)
    stream = SeedStream(11)

    cells = drift_surface([1.0, 2.0], [0.1, 0.2], template, 100, stream)

    assert [(cell.c, cell.epsilon) for cell in cells] == [(1.0, 0.1), (1.0, 0.2), (2.0, 0.1), (2.0, 0.2)]
    direct = estimate_degenerate_drift(EaParams(n=40, mu=2, c=2.0), 0.1, 100, stream.child(1, 0))
    assert cells[2].estimate == direct


def test_drift_surface_rejects_empty_grid() -> None:
    with pytest.raises(ValueError):
        drift_surface([], [0.1], EaParams(n=10, c=1.0), 10, SeedStream(0))


def test_eject_frequency_for_pair_states() -> None:
    params = EaParams(n=400, mu=2, c=1.0)
    spec = StateSpec(kind="F", n=400, m=1, r=1, mu=2)

    result = conditional_eject_frequency(spec, params, 2_000, SeedStream(21))

    assert result.accepted >= 2_000
    assert abs(result.frequency - 0.5) < 4 * result.standard_error + 0.02


def test_eject_frequency_needs_f_state() -> None:
    params = EaParams(n=40, mu=2, c=1.0)

    with pytest.raises(ValueError):
        conditional_eject_frequency(StateSpec(kind="degenerate", n=40, m=2), params, 10, SeedStream(0))


def test_state_contribution_is_bounded_by_its_visits() -> None:
    params = EaParams(n=80, mu=2, c=1.0)
    spec = StateSpec(kind="F", n=80, m=8, r=1, mu=2)

    estimate = estimate_state_contribution(spec, params, 400, SeedStream(4))

    assert estimate.trials == 400
    assert abs(estimate.mean) <= 2.0


def test_transition_profile_counts_lengths() -> None:
    params = EaParams(n=80, mu=2, c=1.0)

    profile = estimate_transition_profile(params, 0.1, 500, SeedStream(2))

    assert profile.trials == 500
    assert sum(profile.generation_counts.values()) + profile.aborted == 500
    assert profile.tail(1) == pytest.approx(1.0)
    assert 0.0 <= profile.multi_zero_flip_fraction <= 1.0


def test_map_in_order_serial_path() -> None:
    assert map_in_order(len, [range(3), range(5)], threads=1) == [3, 5]


def test_construct_state_is_seed_deterministic() -> None:
    spec = StateSpec(kind="B", n=30, m=3, r=2, k=1)

    first = construct_state(spec, SeedStream(1).child(0).generator())
    second = construct_state(spec, SeedStream(1).child(0).generator())

    assert first == second
    assert isinstance(first.members[0], BitString)


@pytest.mark.parametrize("kind", ["A", "B"])
def test_pre_selection_states_need_two_member_parameters(kind: str) -> None:
    spec = StateSpec(kind=kind, n=60, m=4, r=1, k=1)

    with pytest.raises(ValueError):
        estimate_state_drift(spec, EaParams(n=60, mu=3, c=1.0), 10, SeedStream(0))
    with pytest.raises(ValueError):
        estimate_state_drift(spec, EaParams(n=60, mu=1, c=1.0), 10, SeedStream(0))


def test_transition_length_tail_decays_geometrically() -> None:
    mu = 3
    params = EaParams(n=100, mu=mu, c=1.0)

    profile = estimate_transition_profile(params, 0.1, 20_000, SeedStream(47))
    tails = [profile.tail(k * mu) for k in range(1, 4)]

    assert profile.aborted == 0
    assert all(tail > 0 for tail in tails)
    assert tails[1] < 0.9 * tails[0]
    assert tails[2] < 0.9 * tails[1]
    slope = np.polyfit(range(1, 4), np.log(tails), 1)[0]
    assert slope < -0.1
