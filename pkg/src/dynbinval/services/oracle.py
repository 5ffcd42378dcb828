"""Exact verifiers for selection probabilities and tiny-n drift.

Selection under Dynamic BinVal only depends on which *category* of differing
positions comes first in the random priority order, so probabilities are
obtained by walking category prefixes (the next position falls into a category
with probability proportional to how many of its positions remain) instead of
enumerating all ``d!`` raw orders.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Callable, Sequence

import sympy
from pydantic import BaseModel, Field, model_validator
from sympy.utilities.iterables import multiset_permutations

from .bitpop import BitString, Population, diff_mask, iter_positions

__all__ = [
    "Category",
    "CategoryProfile",
    "ExactChainResult",
    "MAX_DIFF_POSITIONS",
    "OracleLimitError",
    "SymmetryReport",
    "conditional_symmetry_check",
    "exact_discard_distribution",
    "exact_tiny_chain_drift",
    "symmetry_probabilities",
]

logger = logging.getLogger(__name__)

#: Largest number of differing positions the enumeration accepts.
MAX_DIFF_POSITIONS = 12
MAX_CHAIN_LENGTH = 5
MAX_CHAIN_MU = 2


class OracleLimitError(ValueError):
    """Raised when an exact computation exceeds its size limits."""


class Category(BaseModel):
    """A block of differing positions on which every member has a fixed bit."""

    name: str = Field(..., description="Label, e.g. 'gained' or 'lost_r'")
    size: int = Field(..., ge=1, description="Number of positions in the block")
    bits: tuple[int, ...] = Field(..., description="Bit of each member on these positions")


class CategoryProfile(BaseModel):
    """Differing positions of a population snapshot, partitioned into categories."""

    members: tuple[str, ...] = Field(..., description="Member names, in discard-vector order")
    categories: tuple[Category, ...] = Field(default=(), description="Disjoint position blocks")

    @model_validator(mode="after")
    def _check_categories(self) -> "CategoryProfile":
        if len(self.members) < 2:
            raise ValueError("A profile needs at least two members")
        for category in self.categories:
            if len(category.bits) != len(self.members):
                raise ValueError(
                    f"Category {category.name!r} has {len(category.bits)} bits for {len(self.members)} members"
                )
            if set(category.bits) - {0, 1}:
                raise ValueError(f"Category {category.name!r} holds non-binary bits")
            if len(set(category.bits)) == 1:
                raise ValueError(f"Category {category.name!r} does not separate any members")
        return self

    @property
    def diff_count(self) -> int:
        return sum(category.size for category in self.categories)

    @classmethod
    def from_strings(cls, strings: Sequence[BitString], names: Sequence[str] | None = None) -> "CategoryProfile":
        """Group the differing positions of ``strings`` by their column pattern."""

        names = tuple(names) if names is not None else tuple(f"s{index}" for index in range(len(strings)))
        counts: dict[tuple[int, ...], int] = {}
        for position in iter_positions(diff_mask(strings)):
            pattern = tuple(member.bit(position) for member in strings)
            counts[pattern] = counts.get(pattern, 0) + 1
        categories = tuple(
            Category(name="".join(map(str, pattern)), size=size, bits=pattern)
            for pattern, size in sorted(counts.items())
        )
        return cls(members=names, categories=categories)

    @classmethod
    def pair(cls, r: int) -> "CategoryProfile":
        """``{x0, x^(1-r)}``: one gained one-bit, ``r`` lost one-bits."""

        return cls(
            members=("x0", "x_r"),
            categories=(
                Category(name="gained_r", size=1, bits=(0, 1)),
                Category(name="lost_r", size=r, bits=(1, 0)),
            ),
        )

    @classmethod
    def state_A(cls, r: int, k: int) -> "CategoryProfile":
        """``{x0, x^(1-r), x^(1-k)}``; ``k = 0`` drops the ``lost_k`` block."""

        categories = [
            Category(name="gained_r", size=1, bits=(0, 1, 0)),
            Category(name="lost_r", size=r, bits=(1, 0, 1)),
            Category(name="gained_k", size=1, bits=(0, 0, 1)),
        ]
        if k:
            categories.append(Category(name="lost_k", size=k, bits=(1, 1, 0)))
        return cls(members=("x0", "x_r", "x_k"), categories=tuple(categories))

    @classmethod
    def state_B(cls, r: int, k: int) -> "CategoryProfile":
        """``{x0, x^(1-r), x^(2-r-k)}``; ``k = 0`` drops the ``lost_k`` block."""

        categories = [
            Category(name="gained_r", size=1, bits=(0, 1, 1)),
            Category(name="lost_r", size=r, bits=(1, 0, 0)),
            Category(name="gained_k", size=1, bits=(0, 0, 1)),
        ]
        if k:
            categories.append(Category(name="lost_k", size=k, bits=(1, 1, 0)))
        return cls(members=("x0", "x_r", "x_rk"), categories=tuple(categories))


def exact_discard_distribution(
    profile: CategoryProfile, offspring: int | None = None
) -> tuple[Fraction, ...]:
    """Exact probability that each member is the least fit under a uniform order.

    Members that agree on every category are identical strings; among them the
    discarded one is uniform, or ``offspring`` when it is one of them.
    """

    if profile.diff_count > MAX_DIFF_POSITIONS:
        raise OracleLimitError(
            f"{profile.diff_count} differing positions exceed the limit of {MAX_DIFF_POSITIONS}"
        )
    patterns = tuple(category.bits for category in profile.categories)
    sizes = tuple(category.size for category in profile.categories)
    candidates = frozenset(range(len(profile.members)))
    return _discard(patterns, sizes, candidates, len(profile.members), offspring)


@lru_cache(maxsize=None)
def _discard(
    patterns: tuple[tuple[int, ...], ...],
    sizes: tuple[int, ...],
    candidates: frozenset[int],
    width: int,
    offspring: int | None,
) -> tuple[Fraction, ...]:
    result = [Fraction(0)] * width
    splitting = [
        index
        for index, pattern in enumerate(patterns)
        if sizes[index] and len({pattern[member] for member in candidates}) > 1
    ]
    if len(candidates) == 1 or not splitting:
        if offspring is not None and offspring in candidates:
            result[offspring] = Fraction(1)
        else:
            for member in candidates:
                result[member] = Fraction(1, len(candidates))
        return tuple(result)

    # Only categories that split the remaining candidates matter; the first of
    # them in the order is uniform over their pooled positions.
    pool = sum(sizes[index] for index in splitting)
    for index in splitting:
        weight = Fraction(sizes[index], pool)
        survivors = frozenset(member for member in candidates if patterns[index][member] == 0)
        remaining = sizes[:index] + (sizes[index] - 1,) + sizes[index + 1 :]
        for member, probability in enumerate(_discard(patterns, remaining, survivors, width, offspring)):
            result[member] += weight * probability
    return tuple(result)


@dataclass(slots=True)
class SymmetryReport:
    """Probabilities of the acceptance event and the mutation-position event."""

    accepted: Fraction
    marker_late: Fraction
    joint: Fraction

    @property
    def independent(self) -> bool:
        return self.joint == self.accepted * self.marker_late


def symmetry_probabilities(
    r: int, order_weight: Callable[[Sequence[str]], int | Fraction] | None = None
) -> SymmetryReport:
    """Enumerate the relative order of ``x^(1-r)``'s gained bit, ``x0``'s ``r`` extra
    one-bits and the first flipped position of a mutation.

    Labels: ``"g"`` the gained bit, ``"l"`` one of the ``r`` lost bits, ``"m"``
    the mutation marker.  ``order_weight`` reweights label sequences; the
    default is the uniform order.
    """

    if r < 1:
        raise ValueError(f"r must be at least 1, got {r}")
    if r + 1 > MAX_DIFF_POSITIONS:
        raise OracleLimitError(f"r={r} exceeds the enumeration limit")
    weigh = order_weight or (lambda sequence: 1)
    total = accepted = marker_late = joint = Fraction(0)
    for sequence in multiset_permutations(["g"] + ["l"] * r + ["m"]):
        weight = Fraction(weigh(sequence))
        unmarked = [label for label in sequence if label != "m"]
        wins = unmarked[0] == "g"
        late = sequence[0] != "m"
        total += weight
        accepted += weight if wins else 0
        marker_late += weight if late else 0
        joint += weight if wins and late else 0
    return SymmetryReport(accepted=accepted / total, marker_late=marker_late / total, joint=joint / total)


def conditional_symmetry_check(
    r: int, order_weight: Callable[[Sequence[str]], int | Fraction] | None = None
) -> bool:
    """``True`` when acceptance of ``x^(1-r)`` is independent of the mutation marker
    coming after the first differing position."""

    return symmetry_probabilities(r, order_weight).independent


@dataclass(slots=True)
class ExactChainResult:
    """Exact expected zero-count change until the next degenerate population."""

    expected_change: Fraction
    expected_next_zero_count: Fraction
    state_count: int
    transition_digest: str


_State = tuple[int, ...]


def _canonical(members: Sequence[BitString]) -> _State:
    """Column-pattern counts of the population, minimised over member orderings."""

    if len(members) == 1:
        return (members[0].zero_count,)
    x, y = members
    n = x.n
    counts = [0, 0, 0, 0]
    for position in range(n):
        counts[2 * x.bit(position) + y.bit(position)] += 1
    swapped = [counts[0], counts[2], counts[1], counts[3]]
    return tuple(min(counts, swapped))


def _materialise(state: _State, n: int) -> tuple[BitString, ...]:
    if len(state) == 1:
        return (BitString.with_zeros(n, range(state[0])),)
    x_bits: list[int] = []
    y_bits: list[int] = []
    for pattern, count in enumerate(state):
        x_bits.extend([pattern >> 1] * count)
        y_bits.extend([pattern & 1] * count)
    return BitString.from_bits(x_bits), BitString.from_bits(y_bits)


def _is_degenerate(state: _State) -> bool:
    return len(state) == 1 or (state[1] == 0 and state[2] == 0)


def _zero_count(state: _State) -> int:
    return state[0] if len(state) == 1 else state[0] + state[1]


def _transitions(state: _State, n: int, q: Fraction) -> dict[_State, Fraction]:
    members = _materialise(state, n)
    mu = len(members)
    outcome: dict[_State, Fraction] = {}
    for parent in members:
        for flips in product((0, 1), repeat=n):
            d = sum(flips)
            p_mutation = Fraction(1, mu) * q**d * (1 - q) ** (n - d)
            mask = sum(1 << position for position, bit in enumerate(flips) if bit)
            strings = members + (parent.flip(mask),)
            discard = None
            if diff_mask(strings):
                discard = exact_discard_distribution(CategoryProfile.from_strings(strings), offspring=mu)
            for index in range(mu + 1):
                if discard is None:
                    p_select = Fraction(1) if index == mu else Fraction(0)
                else:
                    p_select = discard[index]
                if not p_select:
                    continue
                survivors = strings[:index] + strings[index + 1 :]
                target = _canonical(survivors)
                outcome[target] = outcome.get(target, Fraction(0)) + p_mutation * p_select
    if sum(outcome.values()) != 1:
        raise AssertionError(f"Transition probabilities from {state} do not sum to one")
    return outcome


def exact_tiny_chain_drift(
    n: int,
    mu: int,
    c: Fraction | int,
    m: int,
    start: Population | None = None,
) -> ExactChainResult:
    """Exact degenerate-population drift for tiny ``n`` by absorbing-chain algebra.

    Starting from ``mu`` copies of a string with ``m`` zero-bits (or from
    ``start``), at least one generation is performed; every non-degenerate
    population is transient and every degenerate one absorbs with its zero
    count.  ``c`` is taken as an exact rational so the mutation rate ``c/n`` is
    exact.
    """

    if n > MAX_CHAIN_LENGTH or mu > MAX_CHAIN_MU:
        raise OracleLimitError(f"Exact chains need n <= {MAX_CHAIN_LENGTH} and mu <= {MAX_CHAIN_MU}")
    if n < 1 or mu < 1 or not 0 <= m <= n:
        raise ValueError(f"Invalid chain parameters n={n}, mu={mu}, m={m}")
    q = Fraction(c) / n
    if not 0 < q < 1:
        raise ValueError(f"Mutation rate c/n = {q} must lie in (0, 1)")

    if start is None:
        start = Population.degenerate(BitString.with_zeros(n, range(m)), mu)
    elif start.mu != mu or start.n != n:
        raise ValueError("Start population does not match n and mu")
    reference = start.members[0].zero_count
    origin = _canonical(start.members)

    kernel: dict[_State, dict[_State, Fraction]] = {}
    frontier = [origin]
    while frontier:
        state = frontier.pop()
        if state in kernel:
            continue
        kernel[state] = _transitions(state, n, q)
        frontier.extend(
            target for target in kernel[state] if not _is_degenerate(target) and target not in kernel
        )

    transient = sorted(state for state in kernel if not _is_degenerate(state))
    index = {state: position for position, state in enumerate(transient)}

    size = len(transient)
    matrix = sympy.eye(size)
    rhs = sympy.zeros(size, 1)
    for state in transient:
        row = index[state]
        for target, probability in kernel[state].items():
            value = sympy.Rational(probability.numerator, probability.denominator)
            if _is_degenerate(target):
                rhs[row] += value * _zero_count(target)
            else:
                matrix[row, index[target]] -= value
    absorbed = matrix.LUsolve(rhs) if size else sympy.zeros(0, 1)

    def expected_after(state: _State) -> Fraction:
        if _is_degenerate(state):
            return Fraction(_zero_count(state))
        value = sympy.Rational(absorbed[index[state]])
        return Fraction(int(value.p), int(value.q))

    if _is_degenerate(origin):
        expected = sum(
            (probability * expected_after(target) for target, probability in kernel[origin].items()),
            Fraction(0),
        )
    else:
        expected = expected_after(origin)

    digest = hashlib.sha1()
    for state in sorted(kernel):
        for target, probability in sorted(kernel[state].items()):
            digest.update(f"{state}->{target}:{probability};".encode("utf-8"))
    logger.debug("Exact chain n=%d mu=%d c=%s m=%d: %d states", n, mu, c, m, len(kernel))
    return ExactChainResult(
        expected_change=reference - expected,
        expected_next_zero_count=expected,
        state_count=len(kernel),
        transition_digest=digest.hexdigest(),
    )
