"""Monte Carlo estimation of degenerate-population drift.

Trials are independent and each draws its randomness from
``seed.child(trial_index)``, so the multiset of per-trial outcomes depends only
on the master seed and the trial count.  Trials are grouped in fixed-size
batches, optionally dispatched to a process pool, and merged with integer
accumulators; the merged estimate does not depend on scheduling.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Iterable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .bitpop import BitString, Population
from .dynbv import least_fit
from .ea import DEFAULT_CAP, EaParams, generation, make_ranking, run_to_next_degenerate
from .seeding import BATCH_SIZE, SeedStream, map_in_order, split_trials

__all__ = [
    "DriftAccumulator",
    "DriftEstimate",
    "EjectFrequency",
    "EstimationError",
    "MAX_ABORT_FRACTION",
    "StateSpec",
    "SurfaceCell",
    "TransitionProfile",
    "conditional_eject_frequency",
    "construct_state",
    "drift_surface",
    "estimate_degenerate_drift",
    "estimate_state_contribution",
    "estimate_state_drift",
    "estimate_transition_profile",
    "zero_count_for",
]

logger = logging.getLogger(__name__)

#: Share of cap hits above which an estimate is flagged invalid.
MAX_ABORT_FRACTION = 0.001


class EstimationError(RuntimeError):
    """Raised when a Monte Carlo estimate has no usable trials."""


def zero_count_for(epsilon: float, n: int) -> int:
    """``floor(epsilon * n)``, robust against representation error."""

    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    m = math.floor(epsilon * n + 1e-9)
    if m > n:
        raise ValueError(f"floor(epsilon * n) = {m} exceeds n = {n}")
    return m


class StateSpec(BaseModel):
    """Symbolic population state relative to a reference individual ``x0``.

    ``x0`` has ``m`` zero-bits.  ``x^(a-b)`` denotes a string with ``a`` extra
    one-bits and ``b`` extra zero-bits relative to ``x0``; extra positions of
    different members are pairwise disjoint.

    * ``degenerate``: ``mu`` copies of ``x0``.
    * ``F``: ``mu - 1`` copies of ``x0`` and one ``x^(1-r)``.
    * ``A``: ``{x0, x^(1-r), x^(1-k)}``, before selection (``mu = 2``).
    * ``B``: ``{x0, x^(1-r), x^(2-r-k)}``, before selection (``mu = 2``).
    """

    kind: Literal["degenerate", "F", "A", "B"] = Field(..., description="State family")
    n: int = Field(..., ge=1, description="String length")
    m: int = Field(..., ge=0, description="Zero-bits of the reference individual x0")
    r: int = Field(default=1, ge=0, description="One-bits lost by x^(1-r)")
    k: int = Field(default=1, ge=0, description="One-bits lost by the second mutation")
    mu: int = Field(default=2, ge=1, description="Population size")

    @model_validator(mode="after")
    def _check_feasible(self) -> "StateSpec":
        if self.m > self.n:
            raise ValueError(f"x0 cannot have {self.m} zero-bits in length {self.n}")
        ones = self.n - self.m
        if self.kind == "F":
            if self.mu < 2:
                raise ValueError("F(r) needs mu >= 2")
            if self.m < 1 or self.r < 1 or self.r > ones:
                raise ValueError(
                    f"Infeasible F(r={self.r}) with m={self.m}, n={self.n}: need m >= 1 and 1 <= r <= n - m"
                )
        elif self.kind in ("A", "B"):
            if self.mu != 2:
                raise ValueError(f"{self.kind}(r, k) states are defined for mu = 2, got {self.mu}")
            if self.m < 2 or self.r < 1 or self.k < 1 or self.r + self.k > ones:
                raise ValueError(
                    f"Infeasible {self.kind}(r={self.r}, k={self.k}) with m={self.m}, n={self.n}: "
                    "need m >= 2 and r + k <= n - m"
                )
        return self


def construct_state(spec: StateSpec, rng: np.random.Generator) -> Population:
    """Materialise ``spec`` with ``x0``'s zero-bits at uniformly random positions.

    ``x0`` is always the first member; for ``A`` and ``B`` the last member is the
    fresh offspring.
    """

    order = rng.permutation(spec.n).tolist()
    zeros, ones = order[: spec.m], order[spec.m :]
    x0 = BitString.with_zeros(spec.n, zeros)
    if spec.kind == "degenerate":
        return Population.degenerate(x0, spec.mu)

    lost_r = ones[: spec.r]
    x_r = x0.flip(_mask([zeros[0]] + lost_r))
    if spec.kind == "F":
        return Population(members=(x0,) * (spec.mu - 1) + (x_r,))

    lost_k = ones[spec.r : spec.r + spec.k]
    if spec.kind == "A":
        third = x0.flip(_mask([zeros[1]] + lost_k))
    else:
        third = x_r.flip(_mask([zeros[1]] + lost_k))
    return Population(members=(x0, x_r, third))


def _mask(positions: Iterable[int]) -> int:
    mask = 0
    for position in positions:
        mask |= 1 << position
    return mask


@dataclass(slots=True)
class DriftAccumulator:
    """Integer sums of per-trial zero-count decreases; merges are exact."""

    count: int = 0
    total: int = 0
    total_sq: int = 0
    aborted: int = 0

    def add(self, delta: int) -> None:
        self.count += 1
        self.total += delta
        self.total_sq += delta * delta

    def merge(self, other: "DriftAccumulator") -> "DriftAccumulator":
        return DriftAccumulator(
            count=self.count + other.count,
            total=self.total + other.total,
            total_sq=self.total_sq + other.total_sq,
            aborted=self.aborted + other.aborted,
        )

    @property
    def mean(self) -> float:
        if not self.count:
            raise EstimationError("No completed trials to average")
        return float(Fraction(self.total, self.count))

    @property
    def standard_error(self) -> float:
        if self.count < 2:
            return 0.0
        centred = Fraction(self.total_sq) - Fraction(self.total * self.total, self.count)
        variance = centred / (self.count - 1)
        return math.sqrt(float(variance) / self.count)


class DriftEstimate(BaseModel):
    """Monte Carlo drift estimate with its trial bookkeeping."""

    mean: float = Field(..., description="Mean decrease of the zero-bit count")
    standard_error: float = Field(..., description="Sample standard deviation over sqrt(trials)")
    trials: int = Field(..., description="Completed trials entering the mean")
    aborted_trials: int = Field(default=0, description="Trials that hit the generation cap")
    epsilon: float = Field(..., description="Relative zero-bit count of the start")
    params: EaParams = Field(..., description="Algorithm parameters of the estimate")

    @property
    def valid(self) -> bool:
        attempted = self.trials + self.aborted_trials
        return self.aborted_trials <= MAX_ABORT_FRACTION * attempted

    @classmethod
    def from_accumulator(
        cls, acc: DriftAccumulator, epsilon: float, params: EaParams
    ) -> "DriftEstimate":
        if not acc.count:
            raise EstimationError(f"All {acc.aborted} trials hit the generation cap")
        estimate = cls(
            mean=acc.mean,
            standard_error=acc.standard_error,
            trials=acc.count,
            aborted_trials=acc.aborted,
            epsilon=epsilon,
            params=params,
        )
        if not estimate.valid:
            logger.warning(
                "Estimate at c=%s, epsilon=%s is invalid: %d of %d trials aborted",
                params.c,
                epsilon,
                acc.aborted,
                acc.count + acc.aborted,
            )
        return estimate


def _merge(accumulators: Iterable[DriftAccumulator]) -> DriftAccumulator:
    total = DriftAccumulator()
    for acc in accumulators:
        total = total.merge(acc)
    return total


def _select_pre_selection(
    population: Population, params: EaParams, rng: np.random.Generator
) -> Population:
    """Reduce an ``A``/``B`` population (mu + 1 members) to mu by one selection."""

    members = population.members
    discarded = least_fit(members, make_ranking(params, rng), rng, offspring_index=len(members) - 1)
    return population.without(discarded)


def _state_drift_batch(
    trial_indices: range, spec: StateSpec, params: EaParams, seed: SeedStream, cap: int
) -> DriftAccumulator:
    acc = DriftAccumulator()
    for index in trial_indices:
        rng = seed.child(index).generator()
        population = construct_state(spec, rng)
        if population.mu > params.mu:
            population = _select_pre_selection(population, params, rng)
            if population.is_degenerate:
                acc.add(spec.m - population.members[0].zero_count)
                continue
        result = run_to_next_degenerate(population, params, rng, cap)
        if result.hit_cap:
            acc.aborted += 1
            continue
        acc.add(spec.m - result.population.members[0].zero_count)
    logger.debug("Finished trials %d..%d for %s", trial_indices.start, trial_indices.stop - 1, spec.kind)
    return acc


def estimate_state_drift(
    spec: StateSpec,
    params: EaParams,
    trials: int,
    seed: SeedStream,
    cap: int = DEFAULT_CAP,
    threads: int = 1,
) -> DriftEstimate:
    """Estimate the drift from state ``spec``: zero-bits of ``x0`` minus those of
    the next degenerate population.

    Each trial starts at a fresh materialisation of ``spec`` instead of
    conditioning longer runs on passing through it.
    """

    if spec.n != params.n:
        raise ValueError(f"State length {spec.n} does not match n={params.n}")
    if spec.mu != params.mu:
        raise ValueError(f"State {spec.kind} has mu={spec.mu}, parameters have mu={params.mu}")
    work = partial(_state_drift_batch, spec=spec, params=params, seed=seed, cap=cap)
    acc = _merge(map_in_order(work, split_trials(trials), threads))
    return DriftEstimate.from_accumulator(acc, spec.m / spec.n, params)


def estimate_degenerate_drift(
    params: EaParams,
    epsilon: float,
    trials: int,
    seed: SeedStream,
    cap: int = DEFAULT_CAP,
    threads: int = 1,
) -> DriftEstimate:
    """Estimate the degenerate-population drift at ``floor(epsilon * n)`` zero-bits."""

    m = zero_count_for(epsilon, params.n)
    spec = StateSpec(kind="degenerate", n=params.n, m=m, mu=params.mu)
    estimate = estimate_state_drift(spec, params, trials, seed, cap=cap, threads=threads)
    return estimate.model_copy(update={"epsilon": epsilon})


@dataclass(slots=True)
class SurfaceCell:
    c: float
    epsilon: float
    estimate: DriftEstimate


def drift_surface(
    c_grid: Sequence[float],
    epsilon_grid: Sequence[float],
    template: EaParams,
    trials: int,
    seed: SeedStream,
    cap: int = DEFAULT_CAP,
    threads: int = 1,
) -> list[SurfaceCell]:
    """Degenerate drift on every ``(c, epsilon)`` cell, in grid order.

    Cell ``(i, j)`` draws from ``seed.child(i, j)`` so any single cell can be
    reproduced by a direct :func:`estimate_degenerate_drift` call.
    """

    if not c_grid or not epsilon_grid:
        raise ValueError("Both grids must be non-empty")
    cells: list[SurfaceCell] = []
    for i, c in enumerate(c_grid):
        params = EaParams.model_validate({**template.model_dump(), "c": c})
        for j, epsilon in enumerate(epsilon_grid):
            estimate = estimate_degenerate_drift(
                params, epsilon, trials, seed.child(i, j), cap=cap, threads=threads
            )
            logger.info(
                "c=%.4g epsilon=%.4g: drift %.6g +- %.2g (%d trials)",
                c,
                epsilon,
                estimate.mean,
                estimate.standard_error,
                estimate.trials,
            )
            cells.append(SurfaceCell(c=c, epsilon=epsilon, estimate=estimate))
    return cells


@dataclass(slots=True)
class EjectFrequency:
    """Share of accepted offspring in ``F(r)`` that push out a copy of ``x0``."""

    frequency: float
    standard_error: float
    accepted: int
    attempts: int
    excluded: int


@dataclass(slots=True)
class _EjectCounts:
    ejected: int = 0
    accepted: int = 0
    attempts: int = 0
    excluded: int = 0

    def merge(self, other: "_EjectCounts") -> "_EjectCounts":
        return _EjectCounts(
            self.ejected + other.ejected,
            self.accepted + other.accepted,
            self.attempts + other.attempts,
            self.excluded + other.excluded,
        )


def _eject_batch(
    trial_indices: range, spec: StateSpec, params: EaParams, seed: SeedStream
) -> _EjectCounts:
    counts = _EjectCounts()
    x0_copies = spec.mu - 1
    for index in trial_indices:
        rng = seed.child(index).generator()
        population = construct_state(spec, rng)
        outcome = generation(population, params, rng)
        counts.attempts += 1
        if outcome.zero_flips(population.members[0]):
            counts.excluded += 1
            continue
        if not outcome.accepted:
            continue
        counts.accepted += 1
        if outcome.discarded < x0_copies:
            counts.ejected += 1
    return counts


def conditional_eject_frequency(
    spec: StateSpec,
    params: EaParams,
    accepted_target: int,
    seed: SeedStream,
    max_attempts: int | None = None,
    threads: int = 1,
) -> EjectFrequency:
    """Estimate ``P[a copy of x0 is discarded | offspring accepted]`` in ``F(r)``.

    Single generations are simulated from fresh ``F(r)`` states; generations
    whose offspring flips a zero-bit of ``x0`` are excluded.  Whole batches
    are consumed in order until ``accepted_target`` acceptances are seen.
    """

    if spec.kind != "F":
        raise ValueError(f"Eject frequencies are defined for F(r) states, got {spec.kind}")
    if spec.mu != params.mu or spec.n != params.n:
        raise ValueError("State and parameters disagree on n or mu")
    if accepted_target < 1:
        raise ValueError(f"accepted_target must be positive, got {accepted_target}")
    limit = max_attempts if max_attempts is not None else 1_000 * accepted_target
    work = partial(_eject_batch, spec=spec, params=params, seed=seed)

    counts = _EjectCounts()
    start = 0
    wave = max(threads, 1) * 4
    while counts.accepted < accepted_target and start < limit:
        batches = [
            range(begin, min(begin + BATCH_SIZE, limit))
            for begin in range(start, min(start + wave * BATCH_SIZE, limit), BATCH_SIZE)
        ]
        for result in map_in_order(work, batches, threads):
            if counts.accepted >= accepted_target:
                break
            counts = counts.merge(result)
        start = batches[-1].stop
        logger.debug("Eject frequency: %d accepted after %d attempts", counts.accepted, counts.attempts)

    if not counts.accepted:
        raise EstimationError(f"No accepted offspring in {counts.attempts} attempts")
    frequency = counts.ejected / counts.accepted
    return EjectFrequency(
        frequency=frequency,
        standard_error=math.sqrt(frequency * (1 - frequency) / counts.accepted),
        accepted=counts.accepted,
        attempts=counts.attempts,
        excluded=counts.excluded,
    )


def _is_f_state(population: Population, x0: BitString, r: int) -> bool:
    """``True`` when ``population`` is ``mu - 1`` copies of ``x0`` plus one ``x^(1-r)``."""

    others = [member for member in population.members if member.ones != x0.ones]
    if len(others) != 1:
        return False
    other = others[0]
    return (other.ones & ~x0.ones).bit_count() == 1 and (x0.ones & ~other.ones).bit_count() == r


def _contribution_batch(
    trial_indices: range, spec: StateSpec, params: EaParams, seed: SeedStream, cap: int
) -> DriftAccumulator:
    acc = DriftAccumulator()
    start_spec = spec.model_copy(update={"kind": "degenerate"})
    for index in trial_indices:
        rng = seed.child(index).generator()
        population = construct_state(start_spec, rng)
        x0 = population.members[0]
        visited = False
        generations = 0
        while True:
            population = generation(population, params, rng).population
            generations += 1
            visited = visited or _is_f_state(population, x0, spec.r)
            if population.is_degenerate or generations >= cap:
                break
        if not population.is_degenerate:
            acc.aborted += 1
            continue
        acc.add(spec.m - population.members[0].zero_count if visited else 0)
    return acc


def estimate_state_contribution(
    spec: StateSpec,
    params: EaParams,
    trials: int,
    seed: SeedStream,
    cap: int = DEFAULT_CAP,
    threads: int = 1,
) -> DriftEstimate:
    """Estimate the contribution of ``F(r)`` to the degenerate drift.

    This is the mean of the zero-count decrease times the indicator that the
    transition from the degenerate start passed through ``F(r)``, i.e. the
    visit probability times the drift from ``F(r)``.
    """

    if spec.kind != "F":
        raise ValueError(f"Contributions are estimated for F(r) states, got {spec.kind}")
    if spec.mu != params.mu or spec.n != params.n:
        raise ValueError("State and parameters disagree on n or mu")
    work = partial(_contribution_batch, spec=spec, params=params, seed=seed, cap=cap)
    acc = _merge(map_in_order(work, split_trials(trials), threads))
    return DriftEstimate.from_accumulator(acc, spec.m / spec.n, params)


@dataclass(slots=True)
class TransitionProfile:
    """Length distribution of degenerate-to-degenerate transitions."""

    generation_counts: Counter[int] = field(default_factory=Counter)
    multi_zero_flips: int = 0
    trials: int = 0
    aborted: int = 0

    def merge(self, other: "TransitionProfile") -> "TransitionProfile":
        return TransitionProfile(
            generation_counts=self.generation_counts + other.generation_counts,
            multi_zero_flips=self.multi_zero_flips + other.multi_zero_flips,
            trials=self.trials + other.trials,
            aborted=self.aborted + other.aborted,
        )

    def tail(self, threshold: int) -> float:
        """Empirical ``P[K >= threshold]`` over completed transitions."""

        completed = sum(self.generation_counts.values())
        if not completed:
            raise EstimationError("No completed transitions")
        return sum(count for length, count in self.generation_counts.items() if length >= threshold) / completed

    @property
    def multi_zero_flip_fraction(self) -> float:
        """Share of transitions whose offspring flipped at least two zero-bits in total."""

        if not self.trials:
            raise EstimationError("No transitions recorded")
        return self.multi_zero_flips / self.trials


def _profile_batch(
    trial_indices: range, params: EaParams, m: int, seed: SeedStream, cap: int
) -> TransitionProfile:
    profile = TransitionProfile()
    spec = StateSpec(kind="degenerate", n=params.n, m=m, mu=params.mu)
    for index in trial_indices:
        rng = seed.child(index).generator()
        result = run_to_next_degenerate(construct_state(spec, rng), params, rng, cap)
        profile.trials += 1
        if result.zero_flips >= 2:
            profile.multi_zero_flips += 1
        if result.hit_cap:
            profile.aborted += 1
        else:
            profile.generation_counts[result.generations] += 1
    return profile


def estimate_transition_profile(
    params: EaParams,
    epsilon: float,
    trials: int,
    seed: SeedStream,
    cap: int = DEFAULT_CAP,
    threads: int = 1,
) -> TransitionProfile:
    """Collect transition lengths and multi-zero-flip counts from degenerate starts."""

    m = zero_count_for(epsilon, params.n)
    work = partial(_profile_batch, params=params, m=m, seed=seed, cap=cap)
    profile = TransitionProfile()
    for part in map_in_order(work, split_trials(trials), threads):
        profile = profile.merge(part)
    return profile
