import enum
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Protocol, Tuple

import numpy as np

from expfam.exceptions import ArgumentError
from expfam.families import Direction, FamilyModel, divergence_directed

from .thresholds import iterated_log_penalty, threshold_T

logger = logging.getLogger(__name__)

POWERSET_MAX_ARMS = 12


class ArmStatistics(Protocol):
    family: FamilyModel
    counts: np.ndarray
    sums: np.ndarray


class PriorKind(str, enum.Enum):
    SINGLETONS = 'singletons'
    SIZE_UNIFORM = 'size_uniform'
    CUSTOM = 'custom'


class SubsetSearch(str, enum.Enum):
    """NESTED scans prefixes of arms sorted by empirical mean plus every singleton; POWERSET scans all subsets."""
    NESTED = 'nested'
    POWERSET = 'powerset'


@dataclass(frozen=True)
class SubsetPrior:
    kind: PriorKind
    arm_count: int
    custom_weights: Tuple[Tuple[FrozenSet[int], float], ...] = ()

    def __post_init__(self):
        if self.arm_count < 1:
            raise ArgumentError(f"A subset prior needs at least one arm, got {self.arm_count}.")
        if self.kind is not PriorKind.CUSTOM:
            return
        if not self.custom_weights:
            raise ArgumentError("A custom subset prior needs at least one weighted subset.")
        total = 0.0
        for subset, weight in self.custom_weights:
            if not subset or not all(0 <= a < self.arm_count for a in subset):
                raise ArgumentError(f"Subset {sorted(subset)} is empty or names arms outside 0..{self.arm_count - 1}.")
            if weight <= 0:
                raise ArgumentError(f"Subset weights must be positive, got {weight} for {sorted(subset)}.")
            total += weight
        if abs(total - 1.0) > 1e-9:
            raise ArgumentError(f"Custom subset weights must sum to 1, got {total}.")

    @classmethod
    def singletons(cls, arm_count: int) -> 'SubsetPrior':
        return cls(PriorKind.SINGLETONS, arm_count)

    @classmethod
    def size_uniform(cls, arm_count: int) -> 'SubsetPrior':
        return cls(PriorKind.SIZE_UNIFORM, arm_count)

    @classmethod
    def custom(cls, arm_count: int, weights: Mapping[Iterable[int], float]) -> 'SubsetPrior':
        pairs = tuple((frozenset(subset), float(weight)) for subset, weight in weights.items())
        return cls(PriorKind.CUSTOM, arm_count, pairs)

    def weight(self, subset: Iterable[int]) -> float:
        subset = frozenset(subset)
        if self.kind is PriorKind.CUSTOM:
            return dict(self.custom_weights).get(subset, 0.0)
        return self.size_weight(len(subset))

    def size_weight(self, size: int) -> float:
        if self.kind is PriorKind.SINGLETONS:
            return 1.0 / self.arm_count if size == 1 else 0.0
        if self.kind is PriorKind.SIZE_UNIFORM:
            if not 1 <= size <= self.arm_count:
                return 0.0
            return 1.0 / (self.arm_count * math.comb(self.arm_count, size))
        raise ArgumentError("Custom priors weigh individual subsets, not sizes.")


@dataclass(frozen=True)
class AggregateStat:
    subset: Tuple[int, ...]
    pooled_count: int
    pooled_mean: float


def aggregate_stat(state: ArmStatistics, subset: Iterable[int]) -> AggregateStat:
    members = tuple(sorted(set(int(a) for a in subset)))
    if not members:
        raise ArgumentError("Cannot pool an empty subset.")
    counts = np.asarray(state.counts)[list(members)]
    if np.any(counts < 1):
        raise ArgumentError(f"Every arm of {members} must have been observed before pooling.")
    pooled_count = int(counts.sum())
    pooled_mean = float(np.asarray(state.sums)[list(members)].sum() / pooled_count)
    return AggregateStat(members, pooled_count, pooled_mean)


class ThresholdTable:
    """Memo of T(ln(1 / (delta * w))) keyed by prior weight w, for one prior and one delta.

    Size-based priors only ever produce K distinct weights, so an episode holding
    one table evaluates T at most K times.
    """

    def __init__(self, prior: SubsetPrior, delta: float):
        if not 0.0 < delta < 1.0:
            raise ArgumentError(f"Risk delta must lie in (0, 1), got {delta}.")
        self.prior = prior
        self.delta = delta
        self._by_weight: Dict[float, float] = {}

    def budget_arg(self, weight: float) -> float:
        return -math.log(self.delta) - math.log(weight)

    def threshold(self, weight: float) -> float:
        value = self._by_weight.get(weight)
        if value is None:
            value = threshold_T(self.budget_arg(weight))
            self._by_weight[weight] = value
        return value

    def thresholds(self, weights: np.ndarray) -> np.ndarray:
        return np.array([self.threshold(float(w)) for w in weights], dtype=float)


@dataclass(frozen=True)
class CandidateSubsets:
    """Row r of ``incidence`` marks the arms of the r-th candidate subset."""
    incidence: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.incidence.shape[0]

    def members(self, row: int) -> Tuple[int, ...]:
        return tuple(int(a) for a in np.flatnonzero(self.incidence[row]))


def _empty(arm_count: int) -> CandidateSubsets:
    return CandidateSubsets(np.zeros((0, arm_count), dtype=bool), np.zeros(0))


def candidate_subsets(prior: SubsetPrior, means: np.ndarray, eligible: np.ndarray,
                      search: SubsetSearch = SubsetSearch.NESTED, descending: bool = False) -> CandidateSubsets:
    """Subsets whose pooled statistic is checked against its threshold.

    Nested search keeps only arms flagged ``eligible`` and orders them by
    empirical mean (increasing, or decreasing for bounds on the maximum).
    Custom priors always scan their own support.
    """
    arm_count = prior.arm_count
    if prior.kind is PriorKind.CUSTOM:
        incidence = np.zeros((len(prior.custom_weights), arm_count), dtype=bool)
        for row, (subset, _) in enumerate(prior.custom_weights):
            incidence[row, list(subset)] = True
        return CandidateSubsets(incidence, np.array([w for _, w in prior.custom_weights]))

    if search is SubsetSearch.POWERSET:
        if arm_count > POWERSET_MAX_ARMS:
            raise ArgumentError(f"Powerset search is limited to {POWERSET_MAX_ARMS} arms, got {arm_count}.")
        codes = np.arange(1, 2 ** arm_count)[:, None]
        incidence = ((codes >> np.arange(arm_count)) & 1).astype(bool)
    else:
        arms = np.flatnonzero(eligible)
        if arms.size == 0:
            return _empty(arm_count)
        keys = -means[arms] if descending else means[arms]
        order = arms[np.argsort(keys, kind='stable')]
        singles = np.zeros((arms.size, arm_count), dtype=bool)
        singles[np.arange(arms.size), arms] = True
        if prior.kind is PriorKind.SINGLETONS:
            incidence = singles
        else:
            prefixes = np.zeros((order.size, arm_count), dtype=bool)
            prefixes[:, order] = np.tri(order.size, dtype=bool)
            others = singles[arms != order[0]]
            incidence = np.vstack([prefixes, others])

    sizes = incidence.sum(axis=1)
    weights = np.array([prior.size_weight(int(s)) for s in sizes])
    keep = weights > 0
    return CandidateSubsets(incidence[keep], weights[keep])


@dataclass(frozen=True)
class SubsetScan:
    candidates: CandidateSubsets
    pooled_counts: np.ndarray
    pooled_means: np.ndarray
    statistics: np.ndarray
    thresholds: np.ndarray

    @property
    def margins(self) -> np.ndarray:
        return self.statistics - self.thresholds

    def best(self) -> Optional[int]:
        if len(self.candidates) == 0:
            return None
        return int(np.argmax(self.margins))


def scan_subsets(state: ArmStatistics, candidates: CandidateSubsets, point: float, direction: Direction,
                 table: ThresholdTable) -> SubsetScan:
    """Pooled statistics N_S d+/-(mean_S, point) and their thresholds for every candidate subset."""
    counts = np.asarray(state.counts, dtype=float)
    if len(candidates) == 0:
        empty = np.zeros(0)
        return SubsetScan(candidates, empty, empty, empty, empty)
    pooled_counts = candidates.incidence @ counts
    if np.any(pooled_counts < 1):
        raise ArgumentError("Every candidate subset must contain observed arms.")
    pooled_means = (candidates.incidence @ np.asarray(state.sums, dtype=float)) / pooled_counts
    statistics = pooled_counts * np.asarray(divergence_directed(state.family, pooled_means, point, direction))
    thresholds = iterated_log_penalty(pooled_counts) + table.thresholds(candidates.weights)
    return SubsetScan(candidates, pooled_counts, pooled_means, statistics, np.atleast_1d(thresholds))


def find_witness(state: ArmStatistics, gamma: float, prior: SubsetPrior, delta: float,
                 search: SubsetSearch = SubsetSearch.NESTED,
                 table: Optional[ThresholdTable] = None) -> Optional[Tuple[int, ...]]:
    """The subset S maximizing N_S d+(mean_S, gamma) minus its threshold, if that margin is nonnegative."""
    table = table or ThresholdTable(prior, delta)
    means = np.asarray(state.sums, dtype=float) / np.asarray(state.counts, dtype=float)
    candidates = candidate_subsets(prior, means, means <= gamma, search)
    scan = scan_subsets(state, candidates, gamma, Direction.PLUS, table)
    best = scan.best()
    if best is None or scan.margins[best] < 0:
        return None
    return candidates.members(best)


def powerset_weights(prior: SubsetPrior) -> Dict[FrozenSet[int], float]:
    """Prior weight of every nonempty subset, for priors small enough to enumerate."""
    if prior.arm_count > POWERSET_MAX_ARMS:
        raise ArgumentError(f"Cannot enumerate the subsets of {prior.arm_count} arms.")
    arms = range(prior.arm_count)
    subsets = itertools.chain.from_iterable(itertools.combinations(arms, s) for s in range(1, prior.arm_count + 1))
    return {frozenset(s): prior.weight(s) for s in subsets}
