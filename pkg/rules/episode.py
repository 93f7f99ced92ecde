import enum
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from expfam.families import draw_observation
from oracle.instances import BanditInstance

from .exceptions import RuleConfigError
from .sampling import select_lcb, select_murphy, select_round_robin, select_thompson
from .schemas import RuleConfig, SamplingRule
from .state import RunState
from .stopping import StoppingCheck

logger = logging.getLogger(__name__)


class Recommendation(str, enum.Enum):
    BELOW = 'below'
    ABOVE = 'above'
    INCONCLUSIVE = 'inconclusive'


class FiredClause(str, enum.Enum):
    TAU_LESS = 'tau_less'
    TAU_GREATER = 'tau_greater'
    HORIZON = 'horizon'


@dataclass(frozen=True)
class Verdict:
    stopped_at: int
    recommendation: Recommendation
    fired_clause: FiredClause
    witness_subset: Optional[Tuple[int, ...]] = None

    @property
    def conclusive(self) -> bool:
        return self.fired_clause is not FiredClause.HORIZON


@dataclass(frozen=True)
class TraceRecord:
    round: int
    arm: int
    observation: float
    counts: Tuple[int, ...]
    greater_margin: float
    less_margin: float


@dataclass(frozen=True)
class EpisodeOutcome:
    verdict: Verdict
    counts: np.ndarray
    trace: Optional[List[TraceRecord]] = None


def _select(state: RunState, config: RuleConfig, check: StoppingCheck, rng: np.random.Generator) -> int:
    if config.sampling is SamplingRule.LCB:
        return select_lcb(state, config.delta, check.greater_threshold)
    if config.sampling is SamplingRule.THOMPSON:
        return select_thompson(state, rng, config.prior)
    if config.sampling is SamplingRule.MURPHY:
        return select_murphy(state, rng, config.murphy_rejection_cap, config.prior)
    return select_round_robin(state)


def _record(trace: Optional[List[TraceRecord]], state: RunState, check: StoppingCheck, arm: int, value: float) -> None:
    if trace is None:
        return
    if state.initialized:
        greater = check.greater_margin(state)
        less, _ = check.less_margin(state)
    else:
        greater = less = math.nan
    trace.append(TraceRecord(state.round, arm, value, tuple(int(n) for n in state.counts), greater, less))


def run_episode(instance: BanditInstance, config: RuleConfig, rng: np.random.Generator,
                trace: bool = False) -> EpisodeOutcome:
    """Sample arms until one stopping clause fires or the horizon is reached.

    Every arm is drawn once in index order; after that each round checks the
    horizon, then tau_>, then tau_<, and only then selects and draws an arm.
    The instance need not be classifiable: on mu* = gamma the episode simply
    runs into the horizon.
    """
    arm_count = instance.arm_count
    if config.horizon_cap < arm_count:
        raise RuleConfigError(f"horizon_cap {config.horizon_cap} is below the {arm_count} initialisation draws.")
    check = StoppingCheck(arm_count, config.delta, config.stopping, config.search)
    state = RunState.empty(instance.family, instance.gamma, arm_count)
    records: Optional[List[TraceRecord]] = [] if trace else None
    means = instance.mean_array
    debug = logger.isEnabledFor(logging.DEBUG)

    for arm in range(arm_count):
        value = draw_observation(instance.family, means[arm], rng)
        state.observe(arm, value)
        _record(records, state, check, arm, value)

    while True:
        if state.round >= config.horizon_cap:
            verdict = Verdict(state.round, Recommendation.INCONCLUSIVE, FiredClause.HORIZON)
            break
        if check.greater(state):
            verdict = Verdict(state.round, Recommendation.ABOVE, FiredClause.TAU_GREATER)
            break
        fired, witness = check.less(state)
        if fired:
            verdict = Verdict(state.round, Recommendation.BELOW, FiredClause.TAU_LESS, witness)
            break
        arm = _select(state, config, check, rng)
        value = draw_observation(instance.family, means[arm], rng)
        state.observe(arm, value)
        if debug:
            logger.debug(f"Round {state.round}: arm {arm} observed {value:.4g}, counts {state.counts.tolist()}")
        _record(records, state, check, arm, value)

    if debug:
        logger.debug(f"Episode stopped at {verdict.stopped_at} ({verdict.fired_clause.value}): "
                     f"{verdict.recommendation.value}, witness {verdict.witness_subset}")
    return EpisodeOutcome(verdict, state.counts.copy(), records)
