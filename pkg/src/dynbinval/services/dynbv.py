"""Per-generation random fitness: Dynamic BinVal and dynamic linear functions.

Dynamic BinVal weights position ``pi(i)`` with ``2**(n - i)`` for a fresh uniform
permutation ``pi`` each generation.  Comparing two strings under such weights is
lexicographic in priority order, so the values themselves are never built: a
:class:`GenerationRanking` draws i.i.d. uniform priorities for the positions that
are actually compared and orders them.  Smaller priority value means earlier in
the order (more significant).
"""

from __future__ import annotations

import enum
from fractions import Fraction
from typing import Literal, Protocol, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .bitpop import BitString, diff_mask, iter_positions

__all__ = [
    "GenerationRanking",
    "LinearRanking",
    "Ranking",
    "Verdict",
    "WeightDistribution",
    "accept_probability_check",
    "compare",
    "least_fit",
    "linear_fitness",
    "sample_weights",
]


class Verdict(str, enum.Enum):
    X_FITTER = "x_fitter"
    Y_FITTER = "y_fitter"
    EQUAL = "equal"


class WeightDistribution(BaseModel):
    """Distribution of the i.i.d. positive weights of a dynamic linear function."""

    kind: Literal["exponential", "geometric", "uniform", "point_mass"] = Field(
        ..., description="Weight law: exponential(rate), geometric(p), uniform on (0,1] or constant 1"
    )
    rate: float = Field(default=1.0, description="Rate of the exponential law")
    p: float = Field(default=0.5, description="Success probability of the geometric law on 1, 2, ...")

    @model_validator(mode="after")
    def _check_parameters(self) -> "WeightDistribution":
        if self.kind == "exponential" and not self.rate > 0:
            raise ValueError(f"Exponential rate must be positive, got {self.rate}")
        if self.kind == "geometric" and not 0 < self.p < 1:
            raise ValueError(f"Geometric p must lie in (0, 1), got {self.p}")
        return self

    @property
    def mean(self) -> float:
        if self.kind == "exponential":
            return 1.0 / self.rate
        if self.kind == "geometric":
            return 1.0 / self.p
        if self.kind == "uniform":
            return 0.5
        return 1.0

    def draw(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.rate, size)
        if self.kind == "geometric":
            return rng.geometric(self.p, size).astype(float)
        if self.kind == "uniform":
            return 1.0 - rng.random(size)
        return np.ones(size)


def sample_weights(dist: WeightDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. positive weights from ``dist``."""

    if n < 0:
        raise ValueError(f"Cannot draw a negative number of weights: {n}")
    return dist.draw(n, rng)


def linear_fitness(x: BitString, weights: Sequence[float] | np.ndarray) -> float:
    """Return ``sum(w_i * x_i)``."""

    values = np.asarray(weights, dtype=float)
    if values.shape != (x.n,):
        raise ValueError(f"Expected {x.n} weights, got shape {values.shape}")
    if np.any(values <= 0):
        raise ValueError("All weights must be strictly positive")
    return float(values[x.to_array().astype(bool)].sum())


def accept_probability_check(r: int) -> Fraction:
    """Probability ``1/(r+1)`` that ``x^(1-r)`` beats ``x0`` under a random order."""

    if r < 0:
        raise ValueError(f"r must be non-negative, got {r}")
    return Fraction(1, r + 1)


class Ranking(Protocol):
    """One generation's fitness, queried only through the least-fit members."""

    def minimal_members(self, strings: Sequence[BitString], mask: int) -> list[int]:
        ...


class GenerationRanking:
    """Lazily sampled uniform priority order over the positions of one generation."""

    def __init__(self, rng: np.random.Generator) -> None:
        self._rng = rng
        self._priorities: dict[int, float] = {}

    def _draw(self, positions: Sequence[int]) -> None:
        missing = [position for position in positions if position not in self._priorities]
        if missing:
            for position, value in zip(missing, self._rng.random(len(missing))):
                self._priorities[position] = float(value)

    def order(self, mask: int) -> list[int]:
        """Positions of ``mask`` from most to least significant."""

        positions = list(iter_positions(mask))
        self._draw(positions)
        positions.sort(key=self._priorities.__getitem__)
        return positions

    def first_position(self, mask: int) -> int | None:
        positions = list(iter_positions(mask))
        if not positions:
            return None
        self._draw(positions)
        return min(positions, key=self._priorities.__getitem__)

    def first_zero(self, x: BitString) -> int | None:
        """Most significant zero-bit of ``x`` in this generation (``None`` at the optimum)."""

        return self.first_position(x.zeros)

    def minimal_members(self, strings: Sequence[BitString], mask: int) -> list[int]:
        candidates = list(range(len(strings)))
        for position in self.order(mask):
            zeros = [index for index in candidates if not strings[index].bit(position)]
            if zeros and len(zeros) < len(candidates):
                candidates = zeros
                if len(candidates) == 1:
                    break
        return candidates


class LinearRanking:
    """Dynamic linear fitness with weights drawn lazily on compared positions.

    Positions on which all compared strings agree add the same amount to every
    fitness value, so only differing positions receive a weight.
    """

    def __init__(self, dist: WeightDistribution, rng: np.random.Generator) -> None:
        self._dist = dist
        self._rng = rng
        self._weights: dict[int, float] = {}

    def minimal_members(self, strings: Sequence[BitString], mask: int) -> list[int]:
        positions = list(iter_positions(mask))
        missing = [position for position in positions if position not in self._weights]
        if missing:
            for position, value in zip(missing, self._dist.draw(len(missing), self._rng)):
                self._weights[position] = float(value)
        scores = [
            sum(self._weights[position] for position in positions if member.bit(position))
            for member in strings
        ]
        lowest = min(scores)
        return [index for index, score in enumerate(scores) if score == lowest]


def compare(x: BitString, y: BitString, ranking: GenerationRanking) -> Verdict:
    """Decide which of ``x`` and ``y`` is fitter in this generation."""

    position = ranking.first_position(diff_mask((x, y)))
    if position is None:
        return Verdict.EQUAL
    return Verdict.X_FITTER if x.bit(position) else Verdict.Y_FITTER


def least_fit(
    strings: Sequence[BitString],
    ranking: Ranking,
    rng: np.random.Generator,
    offspring_index: int | None = None,
) -> int:
    """Index of the member to discard from ``strings``.

    Ties are broken uniformly at random, except that an offspring tied with an
    identical member is always the one discarded.
    """

    if len(strings) < 2:
        raise ValueError(f"Selection needs at least two strings, got {len(strings)}")
    mask = diff_mask(strings)
    candidates = ranking.minimal_members(strings, mask) if mask else list(range(len(strings)))
    if len(candidates) == 1:
        return candidates[0]
    if offspring_index is not None and offspring_index in candidates:
        offspring = strings[offspring_index].ones
        if any(strings[index].ones == offspring for index in candidates if index != offspring_index):
            return offspring_index
    return candidates[int(rng.integers(len(candidates)))]
