import logging
import math
from typing import Optional, Tuple

import numpy as np

from deviation.subsets import SubsetPrior, SubsetSearch, ThresholdTable, candidate_subsets, scan_subsets
from deviation.thresholds import MIN_THRESHOLD_ARG, iterated_log_penalty, threshold_T
from expfam.families import Direction, divergence_directed

from .exceptions import RuleConfigError
from .schemas import StoppingRule
from .state import RunState

logger = logging.getLogger(__name__)

Witness = Optional[Tuple[int, ...]]


class StoppingCheck:
    """Both stopping clauses of one episode, with every threshold that depends only on (K, delta) precomputed.

    tau_> fires when every arm has N_a d-(mean_a, gamma) >= 3 ln(1 + ln N_a) + T(ln(1/delta)).
    tau_< fires, for Box and Aggregate, when some candidate subset has
    N_S d+(mean_S, gamma) >= 3 ln(1 + ln N_S) + T(ln(1/(delta pi(S)))), and for
    GLRT when the summed positive per-arm excesses reach K T(ln(1/delta) / K).
    """

    def __init__(self, arm_count: int, delta: float, stopping: StoppingRule,
                 search: SubsetSearch = SubsetSearch.NESTED):
        if not 0.0 < delta < 1.0:
            raise RuleConfigError(f"Risk delta must lie in (0, 1), got {delta}.")
        self.arm_count = arm_count
        self.delta = delta
        self.stopping = StoppingRule(stopping)
        self.search = SubsetSearch(search)
        self.greater_threshold = threshold_T(math.log(1.0 / delta))

        self.prior: Optional[SubsetPrior] = None
        self.table: Optional[ThresholdTable] = None
        self.glrt_threshold: Optional[float] = None
        if self.stopping is StoppingRule.GLRT:
            per_arm = math.log(1.0 / delta) / arm_count
            if per_arm < MIN_THRESHOLD_ARG:
                raise RuleConfigError(
                    f"GLRT needs ln(1/delta)/K >= {MIN_THRESHOLD_ARG}; delta={delta} with K={arm_count} gives {per_arm:.4f}."
                )
            self.glrt_threshold = arm_count * threshold_T(per_arm)
        else:
            if self.stopping is StoppingRule.BOX:
                self.prior = SubsetPrior.singletons(arm_count)
            else:
                self.prior = SubsetPrior.size_uniform(arm_count)
            self.table = ThresholdTable(self.prior, delta)
            for size in range(1, arm_count + 1):
                weight = self.prior.size_weight(size)
                if weight > 0:
                    self.table.threshold(weight)

    def greater_margin(self, state: RunState) -> float:
        """min over arms of statistic minus threshold for tau_>; nonnegative iff it fires."""
        means = state.means
        statistics = state.counts * np.asarray(divergence_directed(state.family, means, state.gamma, Direction.MINUS))
        thresholds = iterated_log_penalty(state.counts) + self.greater_threshold
        return float(np.min(statistics - thresholds))

    def greater(self, state: RunState) -> bool:
        return self.greater_margin(state) >= 0.0

    def less_margin(self, state: RunState) -> Tuple[float, Witness]:
        """Best statistic minus threshold for tau_< and the subset achieving it (-inf, None when nothing is below gamma)."""
        means = state.means
        eligible = means <= state.gamma
        if not np.any(eligible):
            return -math.inf, None
        if self.stopping is StoppingRule.GLRT:
            counts = state.counts[eligible]
            statistics = counts * np.asarray(divergence_directed(state.family, means[eligible], state.gamma, Direction.PLUS))
            excess = np.maximum(statistics - np.atleast_1d(iterated_log_penalty(counts)), 0.0)
            return float(excess.sum() - self.glrt_threshold), tuple(int(a) for a in np.flatnonzero(eligible))
        candidates = candidate_subsets(self.prior, means, eligible, self.search)
        scan = scan_subsets(state, candidates, state.gamma, Direction.PLUS, self.table)
        best = scan.best()
        if best is None:
            return -math.inf, None
        return float(scan.margins[best]), candidates.members(best)

    def less(self, state: RunState) -> Tuple[bool, Witness]:
        margin, witness = self.less_margin(state)
        if margin >= 0.0:
            return True, witness
        return False, None


def check_stop_greater(state: RunState, delta: float) -> bool:
    return StoppingCheck(state.arm_count, delta, StoppingRule.BOX).greater(state)


def check_stop_less(state: RunState, delta: float, mode: StoppingRule,
                    search: SubsetSearch = SubsetSearch.NESTED) -> Tuple[bool, Witness]:
    return StoppingCheck(state.arm_count, delta, mode, search).less(state)
