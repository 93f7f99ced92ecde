import enum
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from expfam.exceptions import ArgumentError, DomainError
from expfam.families import FamilyModel

from .exceptions import DegenerateInstanceError


class Side(str, enum.Enum):
    """Which hypothesis holds: minimum mean below (H_<) or above (H_>) the threshold."""
    BELOW = 'below'
    ABOVE = 'above'


@dataclass(frozen=True)
class BanditInstance:
    family: FamilyModel
    means: Tuple[float, ...]
    gamma: float
    _means: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float).ravel()
        if means.size < 1:
            raise ArgumentError("A bandit instance needs at least one arm.")
        if not self.family.contains(means):
            raise DomainError(f"Arm means {means.tolist()} must lie in the open mean domain of the {self.family} family.")
        if not self.family.contains(self.gamma):
            raise DomainError(f"Threshold {self.gamma} must lie in the open mean domain of the {self.family} family.")
        object.__setattr__(self, 'means', tuple(float(m) for m in means))
        object.__setattr__(self, 'gamma', float(self.gamma))
        means.setflags(write=False)
        object.__setattr__(self, '_means', means)

    @classmethod
    def build(cls, family, means: Sequence[float], gamma: float) -> 'BanditInstance':
        if not isinstance(family, FamilyModel):
            family = FamilyModel.of(family)
        return cls(family, tuple(means), gamma)

    @property
    def mean_array(self) -> np.ndarray:
        return self._means

    @property
    def arm_count(self) -> int:
        return self._means.size

    @property
    def minimum(self) -> float:
        return float(self._means.min())

    @property
    def minimizers(self) -> Tuple[int, ...]:
        return tuple(int(a) for a in np.flatnonzero(self._means == self._means.min()))

    @property
    def sorted_means(self) -> np.ndarray:
        return np.sort(self._means)

    @property
    def is_classifiable(self) -> bool:
        return self.minimum != self.gamma

    @property
    def side(self) -> Side:
        if not self.is_classifiable:
            raise DegenerateInstanceError(f"Minimum mean {self.minimum} equals the threshold {self.gamma}; the instance is in neither hypothesis.")
        return Side.BELOW if self.minimum < self.gamma else Side.ABOVE
