import enum
import logging
import math
from typing import Optional

import numpy as np

from expfam.exceptions import ArgumentError, DomainError
from expfam.families import Bound, Direction, invert_divergence

from .subsets import (ArmStatistics, SubsetPrior, SubsetSearch, ThresholdTable, candidate_subsets,
                      scan_subsets)
from .thresholds import iterated_log_penalty, threshold_T

logger = logging.getLogger(__name__)

BISECTION_TOL = 1e-6
MAX_BRACKET_DOUBLINGS = 1000


class Extremum(str, enum.Enum):
    MIN_UPPER = 'min_upper'
    MAX_LOWER = 'max_lower'


def _check_observed(state: ArmStatistics) -> np.ndarray:
    counts = np.asarray(state.counts)
    if counts.size == 0 or np.any(counts < 1):
        raise ArgumentError("Confidence bounds need every arm observed at least once.")
    return np.asarray(state.sums, dtype=float) / counts


def confidence_bounds(state: ArmStatistics, budget_arg: float, bound: Bound,
                      base_threshold: Optional[float] = None) -> np.ndarray:
    """Per-arm q with N_a d(mean_a, q) = 3 ln(1 + ln N_a) + T(budget_arg), on the requested side.

    ``base_threshold`` is T(budget_arg) when the caller already holds it.
    """
    means = _check_observed(state)
    base = threshold_T(budget_arg) if base_threshold is None else base_threshold
    penalties = np.atleast_1d(iterated_log_penalty(np.asarray(state.counts, dtype=float)))
    return np.array([
        invert_divergence(state.family, mu, int(n), base + penalty, bound)
        for mu, n, penalty in zip(means, state.counts, penalties)
    ])


def box_bounds(state: ArmStatistics, delta: float, bound: Bound = Bound.UPPER) -> np.ndarray:
    """Per-arm bounds with the union-bound budget ln(K / delta); their min (max) is U_min^Box (L_max^Box)."""
    if not 0.0 < delta < 1.0:
        raise ArgumentError(f"Risk delta must lie in (0, 1), got {delta}.")
    arm_count = len(state.counts)
    return confidence_bounds(state, math.log(arm_count / delta), bound)


def _violated(state, prior, search, table, means, q, direction: Direction, descending: bool) -> bool:
    eligible = means >= q if descending else means <= q
    candidates = candidate_subsets(prior, means, eligible, search, descending=descending)
    scan = scan_subsets(state, candidates, q, direction, table)
    return bool(np.any(scan.statistics > scan.thresholds))


def ucb_min(state: ArmStatistics, prior: SubsetPrior, delta: float, direction: Extremum = Extremum.MIN_UPPER,
            search: SubsetSearch = SubsetSearch.NESTED, table: Optional[ThresholdTable] = None) -> float:
    """Aggregate confidence bound on the smallest (or, for MAX_LOWER, largest) arm mean.

    MIN_UPPER returns the largest q at which no candidate subset of arms with
    mean <= q has N_S d+(mean_S, q) above its threshold; MAX_LOWER mirrors it
    with d- and arms with mean >= q. The violation is monotone in q, so the
    boundary is found by bisection to within 1e-6.
    """
    means = _check_observed(state)
    table = table or ThresholdTable(prior, delta)
    lo_edge, hi_edge = state.family.mean_domain
    if Extremum(direction) is Extremum.MIN_UPPER:
        point_direction, descending, edge, sign = Direction.PLUS, False, hi_edge, 1.0
        start = float(means.min())
    else:
        point_direction, descending, edge, sign = Direction.MINUS, True, lo_edge, -1.0
        start = float(means.max())

    def violated(q: float) -> bool:
        return _violated(state, prior, search, table, means, q, point_direction, descending)

    # inside: never violated, outside: violated
    inside = start
    if math.isfinite(edge):
        outside = math.nextafter(edge, start)
        if outside == start or not violated(outside):
            return edge
    else:
        step = max(1.0, abs(start))
        outside = start + sign * step
        for _ in range(MAX_BRACKET_DOUBLINGS):
            if violated(outside):
                break
            step *= 2.0
            outside = start + sign * step
        else:
            raise DomainError(f"Could not bracket the confidence bound starting from {start}.")

    while abs(outside - inside) > BISECTION_TOL:
        mid = 0.5 * (inside + outside)
        if violated(mid):
            outside = mid
        else:
            inside = mid
    bound = 0.5 * (inside + outside)
    logger.debug(f"{direction} bound {bound:.6g} from start {start:.6g} ({prior.kind.value} prior, delta {delta})")
    return bound
