"""The (mu+1)-EA and (mu+1)-GA generation loop under a dynamic fitness."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .bitpop import BitString, Population
from .dynbv import GenerationRanking, LinearRanking, Ranking, WeightDistribution, least_fit

__all__ = [
    "DEFAULT_CAP",
    "DegenerationResult",
    "EaParams",
    "GenerationOutcome",
    "RunResult",
    "crossover",
    "generation",
    "make_ranking",
    "mutate",
    "run_to_next_degenerate",
    "run_to_optimum",
    "step",
]

logger = logging.getLogger(__name__)

#: Default generation cap for a single degenerate-to-degenerate transition.
DEFAULT_CAP = 1_000_000


class EaParams(BaseModel):
    """Parameters of one (mu+1)-EA / GA configuration."""

    n: int = Field(..., ge=1, description="Dimension of the search space")
    mu: int = Field(default=2, ge=1, description="Population size")
    c: float = Field(..., gt=0, description="Mutation parameter; each bit flips with probability c/n")
    crossover_prob: float = Field(
        default=0.0,
        ge=0.0,
        le=1.0,
        description="Probability that a generation uses uniform crossover instead of mutation",
    )
    fitness: Literal["dynbv", "linear"] = Field(
        default="dynbv", description="Dynamic BinVal or a dynamic linear function"
    )
    weights: WeightDistribution | None = Field(
        default=None, description="Weight law, required for the dynamic linear fitness"
    )

    @model_validator(mode="after")
    def _check_consistency(self) -> "EaParams":
        if self.c >= self.n:
            raise ValueError(f"Mutation parameter c={self.c} must be smaller than n={self.n}")
        if self.fitness == "linear" and self.weights is None:
            raise ValueError("A dynamic linear fitness needs a weight distribution")
        return self


@dataclass(slots=True)
class GenerationOutcome:
    """What happened in one generation."""

    population: Population
    offspring: BitString
    discarded: int
    flip_mask: int

    @property
    def accepted(self) -> bool:
        return self.discarded != self.population.mu

    def zero_flips(self, reference: BitString) -> int:
        """Positions changed from the parent that are zero-bits of ``reference``."""

        return (self.flip_mask & reference.zeros).bit_count()


@dataclass(slots=True)
class DegenerationResult:
    population: Population
    generations: int
    hit_cap: bool
    zero_flips: int = 0


@dataclass(slots=True)
class RunResult:
    """Outcome of :func:`run_to_optimum`."""

    generations_used: int
    reached_optimum: bool
    final_population: Population


def mutate(x: BitString, c: float, rng: np.random.Generator) -> BitString:
    """Standard bit mutation with rate ``c/n``.

    The flip count is Binomial(n, c/n) and the flipped positions form a
    uniformly random subset of that size.
    """

    n = x.n
    if not 0 < c < n:
        raise ValueError(f"Mutation parameter must satisfy 0 < c < n, got c={c}, n={n}")
    count = int(rng.binomial(n, c / n))
    if count == 0:
        return x
    positions = rng.integers(0, n, count)
    if len(set(positions.tolist())) != count:
        positions = rng.choice(n, count, replace=False)
    mask = 0
    for position in positions.tolist():
        mask |= 1 << position
    return x.flip(mask)


def crossover(x1: BitString, x2: BitString, rng: np.random.Generator) -> BitString:
    """Uniform crossover: every position copies ``x1`` or ``x2`` with probability 1/2."""

    if x1.n != x2.n:
        raise ValueError(f"Length mismatch: {x1.n} != {x2.n}")
    take_second = int.from_bytes(rng.bytes((x1.n + 7) // 8), "little") & x1.full_mask
    return BitString.from_mask(x1.n, (x1.ones & ~take_second) | (x2.ones & take_second))


def make_ranking(params: EaParams, rng: np.random.Generator) -> Ranking:
    """Fresh fitness for one generation."""

    if params.fitness == "linear":
        assert params.weights is not None
        return LinearRanking(params.weights, rng)
    return GenerationRanking(rng)


def generation(population: Population, params: EaParams, rng: np.random.Generator) -> GenerationOutcome:
    """Run one generation and report the offspring and the discarded index.

    With ``mu == 1`` a crossover generation has a single parent to draw from
    and produces a copy of it.
    """

    members = population.members
    mu = len(members)
    if mu != params.mu:
        raise ValueError(f"Population has {mu} members, parameters expect {params.mu}")

    if params.crossover_prob > 0 and rng.random() < params.crossover_prob:
        if mu >= 2:
            first, second = rng.choice(mu, 2, replace=False).tolist()
            parent = members[first]
            offspring = crossover(parent, members[second], rng)
        else:
            parent = offspring = members[0]
    else:
        parent = members[int(rng.integers(mu))] if mu > 1 else members[0]
        offspring = mutate(parent, params.c, rng)

    flip_mask = parent.ones ^ offspring.ones
    candidates = members + (offspring,)
    discarded = least_fit(candidates, make_ranking(params, rng), rng, offspring_index=mu)
    if discarded == mu:
        survivors = population
    else:
        survivors = Population(members=candidates[:discarded] + candidates[discarded + 1 :])
    return GenerationOutcome(
        population=survivors, offspring=offspring, discarded=discarded, flip_mask=flip_mask
    )


def step(population: Population, params: EaParams, rng: np.random.Generator) -> Population:
    """One generation of the (mu+1)-EA (or GA when ``crossover_prob > 0``)."""

    return generation(population, params, rng).population


def run_to_next_degenerate(
    population: Population,
    params: EaParams,
    rng: np.random.Generator,
    cap: int = DEFAULT_CAP,
    reference: BitString | None = None,
) -> DegenerationResult:
    """Iterate until the population is degenerate again.

    At least one generation is always performed, so a degenerate start whose
    first offspring is rejected counts as a transition of length one.
    Zero flips are counted against ``reference``, the degenerate string the
    transition started from (the first member when omitted).
    """

    if cap < 1:
        raise ValueError(f"Generation cap must be at least 1, got {cap}")
    generations = 0
    if reference is None:
        reference = population.members[0]
    zero_flips = 0
    while True:
        outcome = generation(population, params, rng)
        population = outcome.population
        generations += 1
        zero_flips += outcome.zero_flips(reference)
        if population.is_degenerate:
            return DegenerationResult(population, generations, False, zero_flips)
        if generations >= cap:
            logger.debug("Degeneration run hit the cap of %d generations", cap)
            return DegenerationResult(population, generations, True, zero_flips)


def run_to_optimum(
    population: Population,
    params: EaParams,
    rng: np.random.Generator,
    budget: int,
) -> RunResult:
    """Iterate until every member is the all-ones string or ``budget`` is spent."""

    if budget < 0:
        raise ValueError(f"Budget must be non-negative, got {budget}")
    generations = 0
    while not population.is_optimal() and generations < budget:
        population = step(population, params, rng)
        generations += 1
    return RunResult(
        generations_used=generations,
        reached_optimum=population.is_optimal(),
        final_population=population,
    )
