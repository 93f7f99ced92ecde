from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from expfam.exceptions import ArgumentError
from expfam.families import FamilyModel


@dataclass
class RunState:
    """Sufficient statistics of one episode: per-arm counts N_a, sums S_a and the round index t.

    Owned by a single episode and mutated in place by ``observe``.
    """
    family: FamilyModel
    gamma: float
    counts: np.ndarray
    sums: np.ndarray
    round: int = field(default=0)

    @classmethod
    def empty(cls, family: FamilyModel, gamma: float, arm_count: int) -> 'RunState':
        if arm_count < 1:
            raise ArgumentError(f"A run needs at least one arm, got {arm_count}.")
        return cls(family, float(gamma), np.zeros(arm_count, dtype=np.int64), np.zeros(arm_count, dtype=float))

    @classmethod
    def from_statistics(cls, family: FamilyModel, gamma: float, counts: Sequence[int], sums: Sequence[float]) -> 'RunState':
        counts = np.asarray(counts, dtype=np.int64)
        sums = np.asarray(sums, dtype=float)
        if counts.shape != sums.shape or counts.ndim != 1 or counts.size < 1:
            raise ArgumentError("Counts and sums must be matching non-empty vectors.")
        if np.any(counts < 0):
            raise ArgumentError("Counts must be nonnegative.")
        return cls(family, float(gamma), counts.copy(), sums.copy(), int(counts.sum()))

    @property
    def arm_count(self) -> int:
        return self.counts.size

    @property
    def initialized(self) -> bool:
        return bool(np.all(self.counts >= 1))

    @property
    def means(self) -> np.ndarray:
        if not self.initialized:
            raise ArgumentError("Empirical means need every arm observed at least once.")
        return self.sums / self.counts

    def observe(self, arm: int, value: float) -> None:
        self.counts[arm] += 1
        self.sums[arm] += value
        self.round += 1
