"""Bit-string search points and populations.

A :class:`BitString` packs its bits into a single Python integer (bit ``i`` of
``ones`` is position ``i``), so population-level comparisons are word-wise
integer operations and the cost of walking differing positions is proportional
to how many there are, not to ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "BitString",
    "Population",
    "diff_mask",
    "diff_positions",
    "dominates",
    "is_degenerate",
    "iter_positions",
]


def iter_positions(mask: int) -> Iterator[int]:
    """Yield the set bit indices of ``mask`` in increasing order."""

    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass(frozen=True, slots=True)
class BitString:
    """Fixed-length bit vector with a cached zero-bit count."""

    n: int
    ones: int
    zero_count: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"BitString length must be positive, got {self.n}")
        if self.ones < 0 or self.ones >> self.n:
            raise ValueError(f"Bit mask does not fit into {self.n} positions")
        if __debug__ and self.zero_count != self.n - self.ones.bit_count():
            raise AssertionError(
                f"Cached zero count {self.zero_count} disagrees with recount "
                f"{self.n - self.ones.bit_count()}"
            )

    @classmethod
    def from_mask(cls, n: int, ones: int) -> "BitString":
        return cls(n=n, ones=ones, zero_count=n - ones.bit_count())

    @classmethod
    def from_string(cls, text: str) -> "BitString":
        """Parse ``"1101"`` style text; character ``i`` is position ``i``."""

        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"Not a bit string: {text!r}")
        ones = 0
        for index, char in enumerate(text):
            if char == "1":
                ones |= 1 << index
        return cls.from_mask(len(text), ones)

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitString":
        return cls.from_string("".join("1" if bit else "0" for bit in bits))

    @classmethod
    def all_ones(cls, n: int) -> "BitString":
        return cls(n=n, ones=(1 << n) - 1, zero_count=0)

    @classmethod
    def with_zeros(cls, n: int, zero_positions: Iterable[int]) -> "BitString":
        """Return the string of length ``n`` that is zero exactly at ``zero_positions``."""

        mask = 0
        for position in zero_positions:
            if not 0 <= position < n:
                raise ValueError(f"Position {position} outside 0..{n - 1}")
            mask |= 1 << int(position)
        return cls.from_mask(n, ((1 << n) - 1) & ~mask)

    @property
    def one_count(self) -> int:
        return self.n - self.zero_count

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    @property
    def zeros(self) -> int:
        """Mask of the zero positions."""

        return self.full_mask & ~self.ones

    def bit(self, position: int) -> int:
        return (self.ones >> position) & 1

    def flip(self, flip_mask: int) -> "BitString":
        """Return a copy with the bits in ``flip_mask`` inverted.

        The zero count is updated from the flipped bits only.
        """

        if not flip_mask:
            return self
        gained = (flip_mask & ~self.ones).bit_count()
        lost = (flip_mask & self.ones).bit_count()
        return BitString(
            n=self.n,
            ones=self.ones ^ flip_mask,
            zero_count=self.zero_count - gained + lost,
        )

    def zero_positions(self) -> list[int]:
        return list(iter_positions(self.zeros))

    def to_array(self) -> np.ndarray:
        """Return the bits as a ``uint8`` array of length ``n``."""

        raw = self.ones.to_bytes((self.n + 7) // 8, "little")
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
        return bits[: self.n]

    def _check_length(self, other: "BitString") -> None:
        if self.n != other.n:
            raise ValueError(f"Length mismatch: {self.n} != {other.n}")

    def __str__(self) -> str:
        return "".join(str(self.bit(index)) for index in range(self.n))


def dominates(x: BitString, y: BitString) -> bool:
    """Return ``True`` when ``x_i >= y_i`` at every position."""

    x._check_length(y)
    return not (y.ones & ~x.ones)


def diff_mask(strings: Sequence[BitString]) -> int:
    """Mask of positions where not all ``strings`` agree."""

    if not strings:
        return 0
    first = strings[0]
    mask = 0
    for other in strings[1:]:
        first._check_length(other)
        mask |= first.ones ^ other.ones
    return mask


def diff_positions(strings: Sequence[BitString]) -> frozenset[int]:
    """Positions where not all ``strings`` agree."""

    return frozenset(iter_positions(diff_mask(strings)))


@dataclass(frozen=True, slots=True)
class Population:
    """Multiset of ``mu`` equal-length search points.

    Member order carries no meaning for the algorithm; it is kept stable so
    that runs are reproducible.
    """

    members: tuple[BitString, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("A population needs at least one member")
        length = self.members[0].n
        for member in self.members[1:]:
            if member.n != length:
                raise ValueError(f"Length mismatch in population: {member.n} != {length}")

    @classmethod
    def degenerate(cls, x: BitString, mu: int) -> "Population":
        if mu < 1:
            raise ValueError(f"Population size must be at least 1, got {mu}")
        return cls(members=(x,) * mu)

    @property
    def mu(self) -> int:
        return len(self.members)

    @property
    def n(self) -> int:
        return self.members[0].n

    @property
    def is_degenerate(self) -> bool:
        first = self.members[0].ones
        return all(member.ones == first for member in self.members[1:])

    def is_optimal(self) -> bool:
        """``True`` when every member is the all-ones string."""

        return all(member.zero_count == 0 for member in self.members)

    def without(self, index: int) -> "Population":
        return Population(members=self.members[:index] + self.members[index + 1 :])

    def with_member(self, x: BitString) -> "Population":
        return Population(members=self.members + (x,))

    def min_zero_count(self) -> int:
        return min(member.zero_count for member in self.members)

    def __iter__(self) -> Iterator[BitString]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)


def is_degenerate(population: Population) -> bool:
    """Return ``True`` when all members are bitwise equal."""

    return population.is_degenerate
