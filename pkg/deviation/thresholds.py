"""Self-normalized deviation thresholds.

For a subset S of arms pooled to N observations, the stopping statistics are
compared with ``3 ln(1 + ln N) + T(x)`` where ``x = ln(1 / (delta * pi(S)))``
and ``T`` is the mixture-martingale threshold

    T(x) = 2 h^-1(1 + (h^-1(1 + x) + ln zeta(2)) / 2),   h(u) = u - ln u.

T is only valid for x >= 0.04, where it is at least 6.
"""
import logging
import math

import numpy as np

from expfam.exceptions import ArgumentError, DomainError

logger = logging.getLogger(__name__)

ZETA2 = math.pi ** 2 / 6.0
LOG_ZETA2 = math.log(ZETA2)
MIN_THRESHOLD_ARG = 0.04

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50


def h(u: float) -> float:
    if u < 1.0:
        raise DomainError(f"h is defined on [1, inf), got {u}.")
    return u - math.log(u)


def h_inverse_upper_bound(x: float) -> float:
    """x + ln(x + sqrt(2 (x - 1))), never below the true inverse."""
    return x + math.log(x + math.sqrt(2.0 * (x - 1.0)))


def h_inverse(x: float) -> float:
    """Inverse of h on [1, inf) by Newton iteration from above.

    h is convex and increasing there, so iterates started at the upper bound
    decrease monotonically to the root.
    """
    if x < 1.0:
        raise DomainError(f"h^-1 is defined on [1, inf), got {x}.")
    if x == 1.0:
        return 1.0
    u = h_inverse_upper_bound(x)
    for _ in range(NEWTON_MAXITER):
        step = (u - math.log(u) - x) / (1.0 - 1.0 / u)
        u -= step
        if abs(step) <= NEWTON_TOL * u:
            break
    else:
        logger.warning(f"h^-1({x}) did not converge in {NEWTON_MAXITER} Newton steps; last step {step:.3e}")
    return max(u, 1.0)


def threshold_T(x: float) -> float:
    if not x >= MIN_THRESHOLD_ARG:
        raise DomainError(f"Threshold T(x) needs x >= {MIN_THRESHOLD_ARG}, got {x}.")
    return 2.0 * h_inverse(1.0 + (h_inverse(1.0 + x) + LOG_ZETA2) / 2.0)


def iterated_log_penalty(r):
    """3 ln(1 + ln r), the part of the threshold that grows with the pooled count."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 1.0):
        raise ArgumentError(f"Pooled counts must be at least 1, got {r}.")
    penalty = 3.0 * np.log1p(np.log(r))
    return float(penalty) if penalty.ndim == 0 else penalty


def stopping_threshold(r, budget_arg: float):
    """3 ln(1 + ln r) + T(budget_arg); broadcasts over an array of pooled counts."""
    return iterated_log_penalty(r) + threshold_T(budget_arg)
