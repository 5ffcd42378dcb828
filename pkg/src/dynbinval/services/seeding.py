"""Deterministic per-trial random streams and ordered batch dispatch."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

__all__ = ["BATCH_SIZE", "SeedStream", "map_in_order", "split_trials"]

#: Trials per unit of work handed to the pool.
BATCH_SIZE = 2_000

T = TypeVar("T")


@dataclass(frozen=True, slots=True)
class SeedStream:
    """A master seed plus a spawn key naming one node of the stream tree.

    ``SeedStream(seed).child(i, j)`` always yields the same generator no matter
    in which order or in which process the children are materialised, which is
    what lets trial batches run on a worker pool and still merge to the same
    estimate.
    """

    master: int
    key: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.master < 0:
            raise ValueError(f"Seeds must be non-negative, got {self.master}")

    def child(self, *index: int) -> "SeedStream":
        return SeedStream(self.master, self.key + tuple(int(i) for i in index))

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.master, spawn_key=self.key)
        return np.random.Generator(np.random.PCG64(sequence))


def split_trials(trials: int, batch_size: int = BATCH_SIZE) -> list[range]:
    """Cut ``range(trials)`` into consecutive batches."""

    if trials < 1:
        raise ValueError(f"At least one trial is required, got {trials}")
    return [range(start, min(start + batch_size, trials)) for start in range(0, trials, batch_size)]


def map_in_order(fn: Callable[[range], T], batches: Sequence[range], threads: int = 1) -> list[T]:
    """Apply ``fn`` to every batch, on a process pool when ``threads > 1``.

    Results come back in batch order regardless of completion order.
    """

    if threads <= 1 or len(batches) <= 1:
        return [fn(batch) for batch in batches]
    with ProcessPoolExecutor(max_workers=min(threads, len(batches))) as pool:
        return list(pool.map(fn, batches))
