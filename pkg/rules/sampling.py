import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.special import softmax

from deviation.bounds import confidence_bounds
from expfam.families import Bound
from expfam.posterior import DEFAULT_PRIOR, log_prob_below, sample_posteriors

from .state import RunState

logger = logging.getLogger(__name__)

MURPHY_MAX_BATCH = 4096

Prior = Tuple[float, float]


def select_lcb(state: RunState, delta: float, base_threshold: Optional[float] = None) -> int:
    """Arm with the smallest lower confidence bound, using the tau_> budget 3 ln(1 + ln N_a) + T(ln(1/delta))."""
    lower = confidence_bounds(state, math.log(1.0 / delta), Bound.LOWER, base_threshold)
    return int(np.argmin(lower))


def select_thompson(state: RunState, rng: np.random.Generator, prior: Prior = DEFAULT_PRIOR) -> int:
    theta = sample_posteriors(state.family, state.counts, state.sums, rng, prior=prior)
    return int(np.argmin(theta))


def murphy_posterior_draw(state: RunState, rng: np.random.Generator, rejection_cap: int,
                          prior: Prior = DEFAULT_PRIOR) -> Tuple[Optional[np.ndarray], int]:
    """Joint posterior draw conditioned on min_a theta_a < gamma, by rejection.

    Draws come in batches of 1, 2, 4, ... and the first accepted row in draw
    order is kept. Returns (theta, attempts); theta is None once
    ``rejection_cap`` draws were all rejected.
    """
    attempts = 0
    batch = 1
    while attempts < rejection_cap:
        size = min(batch, rejection_cap - attempts)
        theta = sample_posteriors(state.family, state.counts, state.sums, rng, size=size, prior=prior)
        accepted = np.flatnonzero(theta.min(axis=1) < state.gamma)
        if accepted.size:
            row = int(accepted[0])
            return theta[row], attempts + row + 1
        attempts += size
        batch = min(2 * batch, MURPHY_MAX_BATCH)
    return None, attempts


def murphy_fallback_arm(state: RunState, rng: np.random.Generator, prior: Prior = DEFAULT_PRIOR) -> int:
    """Arm drawn with probability proportional to its posterior mass below gamma, normalised in log space."""
    log_p = log_prob_below(state.family, state.counts, state.sums, state.gamma, prior)
    finite = np.isfinite(log_p)
    if not np.any(finite):
        logger.warning(f"No finite posterior mass below {state.gamma} at round {state.round}; choosing an arm uniformly.")
        return int(rng.integers(state.arm_count))
    return int(rng.choice(state.arm_count, p=softmax(np.where(finite, log_p, -np.inf))))


def select_murphy(state: RunState, rng: np.random.Generator, rejection_cap: int, prior: Prior = DEFAULT_PRIOR) -> int:
    theta, attempts = murphy_posterior_draw(state, rng, rejection_cap, prior)
    if theta is not None:
        return int(np.argmin(theta))
    logger.debug(f"Murphy sampling rejected {attempts} posterior draws at round {state.round}; sampling by posterior mass below gamma.")
    return murphy_fallback_arm(state, rng, prior)


def select_round_robin(state: RunState) -> int:
    return state.round % state.arm_count
