import itertools
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import rel_entr

from expfam.exceptions import ArgumentError, DomainError
from expfam.families import Direction, FamilyKind, divergence, divergence_directed

from .exceptions import DegenerateInstanceError, SideError, UnsupportedInstanceError
from .instances import BanditInstance, Side

logger = logging.getLogger(__name__)

BRUTEFORCE_MAX_ARMS = 3


@dataclass(frozen=True)
class OracleSolution:
    characteristic_time: float
    weights: np.ndarray
    side: Side
    minimizers: Tuple[int, ...]


def _check_delta(delta: float) -> float:
    if not 0.0 < delta < 1.0:
        raise ArgumentError(f"Risk delta must lie in (0, 1), got {delta}.")
    return float(delta)


def oracle_solution(instance: BanditInstance) -> OracleSolution:
    """Characteristic time T* and oracle weights w* of a classifiable instance.

    Below the threshold only the lowest arm(s) matter and ties share the mass
    uniformly. Above it every arm must be certified, with weight proportional
    to 1 / d(mu_a, gamma).
    """
    side = instance.side
    d = np.asarray(divergence(instance.family, instance.mean_array, instance.gamma), dtype=float)
    minimizers = instance.minimizers
    weights = np.zeros(instance.arm_count)
    if side is Side.BELOW:
        characteristic_time = 1.0 / d[minimizers[0]]
        weights[list(minimizers)] = 1.0 / len(minimizers)
    else:
        inverse = 1.0 / d
        characteristic_time = float(inverse.sum())
        weights = inverse / characteristic_time
    return OracleSolution(float(characteristic_time), weights, side, minimizers)


def kl_binary(x: float, y: float) -> float:
    if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
        raise DomainError(f"Binary KL needs arguments in (0, 1), got ({x}, {y}).")
    return float(rel_entr(x, y) + rel_entr(1.0 - x, 1.0 - y))


def generic_lower_bound(instance: BanditInstance, delta: float) -> float:
    """E[tau] >= T* kl(delta, 1 - delta) for any delta-correct test."""
    delta = _check_delta(delta)
    return oracle_solution(instance).characteristic_time * kl_binary(delta, 1.0 - delta)


def _extreme_divergences(instance: BanditInstance) -> Tuple[float, float]:
    ordered = instance.sorted_means
    lowest = float(divergence(instance.family, ordered[0], instance.gamma))
    highest = float(divergence(instance.family, ordered[-1], instance.gamma))
    return lowest, highest


def min_draws_bound(instance: BanditInstance, delta: float) -> float:
    """Number of draws every arm receives in expectation under a symmetric delta-correct test.

    Clamped at 0 once delta >= 1 / (2 K^3), where the bound is vacuous.
    """
    delta = _check_delta(delta)
    arms = instance.arm_count
    k = max(_extreme_divergences(instance))
    if k == 0.0:
        raise DegenerateInstanceError("Every arm mean equals the threshold.")
    value = 2.0 * (1.0 - 2.0 * delta * arms ** 3) / (27.0 * arms ** 2 * k)
    return max(0.0, value)


def boosted_lower_bound(instance: BanditInstance, delta: float) -> float:
    delta = _check_delta(delta)
    if instance.side is not Side.BELOW:
        raise SideError(f"The boosted bound needs the minimum below the threshold (min {instance.minimum}, gamma {instance.gamma}).")
    d_lowest, _ = _extreme_divergences(instance)
    d_plus = np.asarray(divergence_directed(instance.family, instance.sorted_means, instance.gamma, Direction.PLUS))
    boost = min_draws_bound(instance, delta) * float(np.sum(1.0 - d_plus / d_lowest))
    return kl_binary(delta, 1.0 - delta) / d_lowest + boost


def lcb_predicted_weights(instance: BanditInstance, delta: float) -> np.ndarray:
    """Asymptotic N_a(tau) / ln(1/delta) of the LCB rule on a Gaussian instance with one arm below gamma.

    The lowest arm gets kl(delta, 1 - delta) / (ln(1/delta) d(mu_1, gamma)), which tends to
    1 / d(mu_1, gamma) as delta goes to 0.
    """
    delta = _check_delta(delta)
    if instance.family.kind is not FamilyKind.GAUSSIAN:
        raise UnsupportedInstanceError(f"LCB allocation is only predicted for Gaussian arms, not {instance.family}.")
    means = instance.mean_array
    below = np.flatnonzero(means < instance.gamma)
    if below.size != 1:
        raise UnsupportedInstanceError(f"LCB allocation needs exactly one arm below the threshold, found {below.size}.")
    lowest = int(below[0])
    mu_1 = means[lowest]
    weights = 2.0 / (means + instance.gamma - 2.0 * mu_1) ** 2
    d_lowest = float(divergence(instance.family, mu_1, instance.gamma))
    weights[lowest] = kl_binary(delta, 1.0 - delta) / (math.log(1.0 / delta) * d_lowest)
    return weights


def _simplex_grid(arms: int, resolution: float) -> np.ndarray:
    steps = int(round(1.0 / resolution))
    points = [c for c in itertools.product(range(steps + 1), repeat=arms - 1) if sum(c) <= steps]
    grid = np.array(points, dtype=float).reshape(len(points), arms - 1)
    return np.column_stack([grid, steps - grid.sum(axis=1)]) / steps


def characteristic_time_bruteforce(instance: BanditInstance, resolution: float = 1e-2) -> Tuple[float, np.ndarray]:
    """T* by maximizing the worst-case information rate over a weight grid on the simplex.

    The inner minimum over the alternative is separable: moving every low arm
    up to gamma when the minimum is below it, or the cheapest single arm down
    to gamma when it is above. Only meant as a check for K <= 3.
    """
    if instance.arm_count > BRUTEFORCE_MAX_ARMS:
        raise UnsupportedInstanceError(f"Brute-force characteristic time is limited to {BRUTEFORCE_MAX_ARMS} arms.")
    side = instance.side
    grid = _simplex_grid(instance.arm_count, resolution)
    means, gamma = instance.mean_array, instance.gamma
    if side is Side.BELOW:
        costs = np.asarray(divergence_directed(instance.family, means, gamma, Direction.PLUS))
        rates = grid @ costs
    else:
        costs = np.asarray(divergence_directed(instance.family, means, gamma, Direction.MINUS))
        rates = (grid * costs).min(axis=1)
    best = int(np.argmax(rates))
    logger.debug(f"Brute-force rate {rates[best]:.6g} over {len(grid)} grid points at weights {grid[best]}")
    return 1.0 / float(rates[best]), grid[best]
